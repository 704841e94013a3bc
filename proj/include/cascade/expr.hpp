#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

// Small expression language for model definitions.
//
// Grammar (whitespace insignificant, `^` right-associative and binding
// tighter than unary minus):
//
//   bundle := expr (',' expr)*
//   expr   := term (('+'|'-') term)*
//   term   := unary (('*'|'/') unary)*
//   unary  := '-' unary | power
//   power  := atom ['^' unary]
//   atom   := number | 't' | 'x'<i>'['<k>']' | 'u['<k>']'
//           | func '(' expr [',' expr] ')' | '(' expr ')'
//   func   := sin | cos | exp | log | tanh | sqrt | abs | min | max
//
// Expressions are parsed to an immutable AST, then bound against a variable
// layout and flattened to a stack program for evaluation. The recursive tree
// walker (`eval_tree`) is kept as a second, independent evaluation route.

namespace cascade::expr {

enum class NodeKind : uint8_t {
  kLiteral, kVarT, kVarX, kVarU,
  kNeg, kAdd, kSub, kMul, kDiv, kPow,
  kSin, kCos, kExp, kLog, kTanh, kSqrt, kAbs, kMin, kMax,
};

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
  NodeKind kind;
  double literal = 0.0;
  int subsystem = 0;  // kVarX: 1-based subsystem index
  int component = 0;  // kVarX / kVarU: 0-based component index
  NodePtr lhs, rhs;   // unary ops use lhs only
};

struct ParseError : std::runtime_error {
  ParseError(std::string msg, int line, int col)
      : std::runtime_error(std::move(msg)), line(line), col(col) {}
  int line, col;
};

struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Variables referenced by an expression: which (subsystem, component) state
// entries, whether `t` appears, and which control components.
struct VarSet {
  bool uses_t = false;
  std::vector<std::pair<int, int>> x;  // (subsystem, component), sorted, unique
  std::vector<int> u;                  // control components, sorted, unique
  int max_subsystem() const;
  int max_u_component() const;  // -1 when no u reference
};

// Slot layout used when binding expressions: slot 0 is t, state component
// (i, k) lives at 1 + (i-1)*d + k, control component k at 1 + n_state_slots + k.
struct SlotLayout {
  int n_subsystems = 0;
  int d = 0;
  int n_controls = 0;  // u slots
  int t_slot() const { return 0; }
  int x_slot(int subsystem, int component) const {
    return 1 + (subsystem - 1) * d + component;
  }
  int u_slot(int component) const { return 1 + n_subsystems * d + component; }
  int total() const { return 1 + n_subsystems * d + n_controls; }
};

enum class Op : uint8_t {
  kPushLit, kPushSlot,
  kNeg, kAdd, kSub, kMul, kDiv, kPow, kPowInt,
  kSin, kCos, kExp, kLog, kTanh, kSqrt, kAbs, kMin, kMax,
};

struct Instr {
  Op op;
  int32_t arg = 0;     // kPushSlot: slot index; kPowInt: exponent
  double literal = 0;  // kPushLit
};

inline constexpr int kMaxProgramStack = 64;

// Flattened postfix form of a bound expression. Evaluation is branch-free
// apart from the instruction dispatch; the batch kernels interpret the same
// code over 4-wide lanes.
class Program {
 public:
  Program() = default;
  std::span<const Instr> code() const { return code_; }
  int max_stack() const { return max_stack_; }
  bool is_constant() const { return constant_; }
  double constant_value() const { return const_value_; }

  // Scalar reference evaluation. Throws EvalError on any non-finite
  // intermediate (out-of-domain math must never pass silently).
  double eval(std::span<const double> slots) const;

 private:
  friend class Expression;
  std::vector<Instr> code_;
  int max_stack_ = 0;
  bool constant_ = false;
  double const_value_ = 0.0;
};

class Expression {
 public:
  Expression() = default;

  // Parses a single expression. Errors carry 1-based line/column.
  static Expression parse(std::string_view text);
  // Parses a comma-separated tuple of expressions (a bundle); the tuple
  // arity is the bundle's output arity.
  static std::vector<Expression> parse_bundle(std::string_view text);

  const NodePtr& root() const { return root_; }
  const VarSet& variables() const { return vars_; }

  // Canonical printable form; parse(print(e)) evaluates identically to e.
  std::string print() const;

  // Independent tree-walking evaluation (reference route). `slots` follows
  // the given layout. Throws EvalError on out-of-domain math.
  double eval_tree(const SlotLayout& layout, std::span<const double> slots) const;

  // Flatten to a stack program against a layout. Checks that every variable
  // fits the layout and throws std::out_of_range otherwise.
  Program compile(const SlotLayout& layout) const;

 private:
  NodePtr root_;
  VarSet vars_;
};

// 1-based depth of the AST (a single literal/variable has depth 1).
int depth(const NodePtr& node);

}  // namespace cascade::expr
