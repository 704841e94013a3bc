#include "cascade/expr.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>

namespace cascade::expr {

namespace {

struct Token {
  enum Kind { kEnd, kNumber, kIdent, kPlus, kMinus, kStar, kSlash, kCaret,
              kLParen, kRParen, kLBracket, kRBracket, kComma } kind;
  std::string text;
  double value = 0;
  int line = 1, col = 1;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) { advance(); }

  const Token& peek() const { return tok_; }
  Token take() {
    Token t = tok_;
    advance();
    return t;
  }

 private:
  void advance() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) bump();
    tok_.line = line_;
    tok_.col = col_;
    if (pos_ >= src_.size()) {
      tok_.kind = Token::kEnd;
      return;
    }
    char c = src_[pos_];
    switch (c) {
      case '+': bump(); tok_.kind = Token::kPlus; return;
      case '-': bump(); tok_.kind = Token::kMinus; return;
      case '*': bump(); tok_.kind = Token::kStar; return;
      case '/': bump(); tok_.kind = Token::kSlash; return;
      case '^': bump(); tok_.kind = Token::kCaret; return;
      case '(': bump(); tok_.kind = Token::kLParen; return;
      case ')': bump(); tok_.kind = Token::kRParen; return;
      case '[': bump(); tok_.kind = Token::kLBracket; return;
      case ']': bump(); tok_.kind = Token::kRBracket; return;
      case ',': bump(); tok_.kind = Token::kComma; return;
      default: break;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      size_t start = pos_;
      while (pos_ < src_.size() &&
             (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.'))
        bump();
      // exponent part
      if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
        size_t mark = pos_;
        bump();
        if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) bump();
        if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
          while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) bump();
        } else {
          pos_ = mark;  // not an exponent, e.g. "2e" would be "2" then ident "e"
        }
      }
      tok_.kind = Token::kNumber;
      tok_.text = std::string(src_.substr(start, pos_ - start));
      try {
        tok_.value = std::stod(tok_.text);
      } catch (const std::exception&) {
        throw ParseError("malformed number '" + tok_.text + "'", tok_.line, tok_.col);
      }
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t start = pos_;
      while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) ||
                                    src_[pos_] == '_'))
        bump();
      tok_.kind = Token::kIdent;
      tok_.text = std::string(src_.substr(start, pos_ - start));
      return;
    }
    throw ParseError(std::string("unexpected character '") + c + "'", line_, col_);
  }

  void bump() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  std::string_view src_;
  size_t pos_ = 0;
  int line_ = 1, col_ = 1;
  Token tok_;
};

NodePtr make(NodeKind kind, NodePtr lhs = nullptr, NodePtr rhs = nullptr) {
  auto n = std::make_shared<Node>();
  n->kind = kind;
  n->lhs = std::move(lhs);
  n->rhs = std::move(rhs);
  return n;
}

const std::map<std::string, NodeKind, std::less<>> kFunctions = {
    {"sin", NodeKind::kSin},   {"cos", NodeKind::kCos},  {"exp", NodeKind::kExp},
    {"log", NodeKind::kLog},   {"tanh", NodeKind::kTanh}, {"sqrt", NodeKind::kSqrt},
    {"abs", NodeKind::kAbs},   {"min", NodeKind::kMin},  {"max", NodeKind::kMax},
};

class Parser {
 public:
  explicit Parser(std::string_view src) : lex_(src) {}

  NodePtr parse_expression() {
    NodePtr lhs = parse_term();
    while (lex_.peek().kind == Token::kPlus || lex_.peek().kind == Token::kMinus) {
      Token op = lex_.take();
      NodePtr rhs = parse_term();
      lhs = make(op.kind == Token::kPlus ? NodeKind::kAdd : NodeKind::kSub,
                 std::move(lhs), std::move(rhs));
    }
    return lhs;
  }

  void expect_end() {
    if (lex_.peek().kind != Token::kEnd)
      throw ParseError("trailing input after expression", lex_.peek().line, lex_.peek().col);
  }

  bool at_end() const { return lex_.peek().kind == Token::kEnd; }
  bool at_comma() const { return lex_.peek().kind == Token::kComma; }
  void skip_comma() { lex_.take(); }
  const Token& current() const { return lex_.peek(); }

 private:
  NodePtr parse_term() {
    NodePtr lhs = parse_unary();
    while (lex_.peek().kind == Token::kStar || lex_.peek().kind == Token::kSlash) {
      Token op = lex_.take();
      NodePtr rhs = parse_unary();
      lhs = make(op.kind == Token::kStar ? NodeKind::kMul : NodeKind::kDiv,
                 std::move(lhs), std::move(rhs));
    }
    return lhs;
  }

  NodePtr parse_unary() {
    if (lex_.peek().kind == Token::kMinus) {
      lex_.take();
      NodePtr inner = parse_unary();
      if (inner->kind == NodeKind::kLiteral) {
        auto folded = std::make_shared<Node>();
        folded->kind = NodeKind::kLiteral;
        folded->literal = -inner->literal;
        return folded;
      }
      return make(NodeKind::kNeg, std::move(inner));
    }
    return parse_power();
  }

  NodePtr parse_power() {
    NodePtr base = parse_atom();
    if (lex_.peek().kind == Token::kCaret) {
      lex_.take();
      // right-associative, and the exponent may carry a sign: x^-2
      NodePtr exponent = parse_unary();
      return make(NodeKind::kPow, std::move(base), std::move(exponent));
    }
    return base;
  }

  int parse_index(const char* what) {
    Token t = lex_.take();
    if (t.kind != Token::kLBracket)
      throw ParseError(std::string("expected '[' after ") + what, t.line, t.col);
    Token idx = lex_.take();
    if (idx.kind != Token::kNumber || idx.value != std::floor(idx.value) || idx.value < 0)
      throw ParseError(std::string("expected nonnegative integer index for ") + what,
                       idx.line, idx.col);
    Token close = lex_.take();
    if (close.kind != Token::kRBracket)
      throw ParseError("expected ']'", close.line, close.col);
    return static_cast<int>(idx.value);
  }

  NodePtr parse_atom() {
    Token t = lex_.take();
    switch (t.kind) {
      case Token::kNumber: {
        auto n = std::make_shared<Node>();
        n->kind = NodeKind::kLiteral;
        n->literal = t.value;
        return n;
      }
      case Token::kLParen: {
        NodePtr inner = parse_expression();
        Token close = lex_.take();
        if (close.kind != Token::kRParen)
          throw ParseError("expected ')'", close.line, close.col);
        return inner;
      }
      case Token::kIdent: {
        if (t.text == "t") return make(NodeKind::kVarT);
        if (t.text == "u") {
          auto n = std::make_shared<Node>();
          n->kind = NodeKind::kVarU;
          n->component = parse_index("'u'");
          return n;
        }
        if (t.text[0] == 'x' && t.text.size() > 1 &&
            std::all_of(t.text.begin() + 1, t.text.end(),
                        [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
          auto n = std::make_shared<Node>();
          n->kind = NodeKind::kVarX;
          n->subsystem = std::stoi(t.text.substr(1));
          if (n->subsystem < 1)
            throw ParseError("subsystem index must be >= 1 in '" + t.text + "'", t.line, t.col);
          n->component = parse_index(("'" + t.text + "'").c_str());
          return n;
        }
        auto it = kFunctions.find(t.text);
        if (it != kFunctions.end()) {
          Token open = lex_.take();
          if (open.kind != Token::kLParen)
            throw ParseError("expected '(' after function '" + t.text + "'", open.line, open.col);
          NodePtr first = parse_expression();
          bool binary = (it->second == NodeKind::kMin || it->second == NodeKind::kMax);
          NodePtr second;
          if (binary) {
            Token comma = lex_.take();
            if (comma.kind != Token::kComma)
              throw ParseError("'" + t.text + "' takes two arguments", comma.line, comma.col);
            second = parse_expression();
          }
          Token close = lex_.take();
          if (close.kind != Token::kRParen)
            throw ParseError("expected ')'", close.line, close.col);
          return make(it->second, std::move(first), std::move(second));
        }
        throw ParseError("unknown variable or function '" + t.text + "'", t.line, t.col);
      }
      case Token::kEnd:
        throw ParseError("unexpected end of input", t.line, t.col);
      default:
        throw ParseError("unexpected token", t.line, t.col);
    }
  }

  Lexer lex_;
};

void collect_vars(const NodePtr& n, VarSet& out) {
  if (!n) return;
  switch (n->kind) {
    case NodeKind::kVarT: out.uses_t = true; break;
    case NodeKind::kVarX: out.x.emplace_back(n->subsystem, n->component); break;
    case NodeKind::kVarU: out.u.push_back(n->component); break;
    default: break;
  }
  collect_vars(n->lhs, out);
  collect_vars(n->rhs, out);
}

void finish_vars(VarSet& v) {
  std::sort(v.x.begin(), v.x.end());
  v.x.erase(std::unique(v.x.begin(), v.x.end()), v.x.end());
  std::sort(v.u.begin(), v.u.end());
  v.u.erase(std::unique(v.u.begin(), v.u.end()), v.u.end());
}

int precedence(NodeKind k) {
  switch (k) {
    case NodeKind::kAdd: case NodeKind::kSub: return 1;
    case NodeKind::kMul: case NodeKind::kDiv: return 2;
    case NodeKind::kNeg: return 3;
    case NodeKind::kPow: return 4;
    default: return 5;  // atoms and function calls
  }
}

void print_node(const NodePtr& n, std::string& out) {
  auto child = [&](const NodePtr& c, bool needs_paren) {
    if (needs_paren) out += '(';
    print_node(c, out);
    if (needs_paren) out += ')';
  };
  switch (n->kind) {
    case NodeKind::kLiteral: {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", n->literal);
      out += buf;
      return;
    }
    case NodeKind::kVarT: out += 't'; return;
    case NodeKind::kVarX:
      out += 'x';
      out += std::to_string(n->subsystem);
      out += '[';
      out += std::to_string(n->component);
      out += ']';
      return;
    case NodeKind::kVarU:
      out += "u[";
      out += std::to_string(n->component);
      out += ']';
      return;
    case NodeKind::kNeg:
      out += '-';
      child(n->lhs, precedence(n->lhs->kind) < precedence(NodeKind::kNeg));
      return;
    case NodeKind::kAdd: case NodeKind::kSub: case NodeKind::kMul:
    case NodeKind::kDiv: case NodeKind::kPow: {
      int p = precedence(n->kind);
      const char* sym = n->kind == NodeKind::kAdd ? " + "
                      : n->kind == NodeKind::kSub ? " - "
                      : n->kind == NodeKind::kMul ? "*"
                      : n->kind == NodeKind::kDiv ? "/" : "^";
      // left child needs parens at strictly lower precedence; right child also
      // at equal precedence for the left-associative ops (and the converse for ^)
      bool rparen, lparen;
      if (n->kind == NodeKind::kPow) {
        lparen = precedence(n->lhs->kind) <= p;
        rparen = precedence(n->rhs->kind) < p;
      } else {
        lparen = precedence(n->lhs->kind) < p;
        rparen = precedence(n->rhs->kind) <= p;
      }
      child(n->lhs, lparen);
      out += sym;
      child(n->rhs, rparen);
      return;
    }
    default: {
      static const std::map<NodeKind, const char*> names = {
          {NodeKind::kSin, "sin"},   {NodeKind::kCos, "cos"},  {NodeKind::kExp, "exp"},
          {NodeKind::kLog, "log"},   {NodeKind::kTanh, "tanh"}, {NodeKind::kSqrt, "sqrt"},
          {NodeKind::kAbs, "abs"},   {NodeKind::kMin, "min"},  {NodeKind::kMax, "max"}};
      out += names.at(n->kind);
      out += '(';
      print_node(n->lhs, out);
      if (n->rhs) {
        out += ", ";
        print_node(n->rhs, out);
      }
      out += ')';
      return;
    }
  }
}

[[noreturn]] void eval_fail(const char* what, double a, double b = 0) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "expression evaluation failed: %s (operands %.17g, %.17g)",
                what, a, b);
  throw EvalError(buf);
}

double checked(double v, const char* what, double a, double b = 0) {
  if (!std::isfinite(v)) eval_fail(what, a, b);
  return v;
}

double eval_node(const Node& n, const SlotLayout& layout, std::span<const double> slots) {
  auto lhs = [&] { return eval_node(*n.lhs, layout, slots); };
  auto rhs = [&] { return eval_node(*n.rhs, layout, slots); };
  switch (n.kind) {
    case NodeKind::kLiteral: return n.literal;
    case NodeKind::kVarT: return slots[layout.t_slot()];
    case NodeKind::kVarX: return slots[layout.x_slot(n.subsystem, n.component)];
    case NodeKind::kVarU: return slots[layout.u_slot(n.component)];
    case NodeKind::kNeg: return -lhs();
    case NodeKind::kAdd: { double a = lhs(), b = rhs(); return checked(a + b, "+", a, b); }
    case NodeKind::kSub: { double a = lhs(), b = rhs(); return checked(a - b, "-", a, b); }
    case NodeKind::kMul: { double a = lhs(), b = rhs(); return checked(a * b, "*", a, b); }
    case NodeKind::kDiv: { double a = lhs(), b = rhs(); return checked(a / b, "/", a, b); }
    case NodeKind::kPow: { double a = lhs(), b = rhs(); return checked(std::pow(a, b), "^", a, b); }
    case NodeKind::kSin: return std::sin(lhs());
    case NodeKind::kCos: return std::cos(lhs());
    case NodeKind::kExp: { double a = lhs(); return checked(std::exp(a), "exp", a); }
    case NodeKind::kLog: { double a = lhs(); return checked(std::log(a), "log", a); }
    case NodeKind::kTanh: return std::tanh(lhs());
    case NodeKind::kSqrt: { double a = lhs(); return checked(std::sqrt(a), "sqrt", a); }
    case NodeKind::kAbs: return std::fabs(lhs());
    case NodeKind::kMin: { double a = lhs(), b = rhs(); return a < b ? a : b; }
    case NodeKind::kMax: { double a = lhs(), b = rhs(); return a > b ? a : b; }
  }
  throw EvalError("corrupt expression node");
}

// Emits postfix code; returns the stack depth the subtree needs.
int flatten(const Node& n, const SlotLayout& layout, std::vector<Instr>& code) {
  switch (n.kind) {
    case NodeKind::kLiteral:
      code.push_back({Op::kPushLit, 0, n.literal});
      return 1;
    case NodeKind::kVarT:
      code.push_back({Op::kPushSlot, layout.t_slot(), 0});
      return 1;
    case NodeKind::kVarX: {
      if (n.subsystem > layout.n_subsystems || n.component >= layout.d)
        throw std::out_of_range("state variable x" + std::to_string(n.subsystem) + "[" +
                                std::to_string(n.component) + "] outside layout");
      code.push_back({Op::kPushSlot, layout.x_slot(n.subsystem, n.component), 0});
      return 1;
    }
    case NodeKind::kVarU: {
      if (n.component >= layout.n_controls)
        throw std::out_of_range("control variable u[" + std::to_string(n.component) +
                                "] outside layout");
      code.push_back({Op::kPushSlot, layout.u_slot(n.component), 0});
      return 1;
    }
    case NodeKind::kPow: {
      int dl = flatten(*n.lhs, layout, code);
      // integer exponents compile to repeated squaring (same order in every
      // backend); everything else goes through pow()
      if (n.rhs->kind == NodeKind::kLiteral && n.rhs->literal == std::floor(n.rhs->literal) &&
          std::fabs(n.rhs->literal) <= 32 && n.rhs->literal != 0) {
        code.push_back({Op::kPowInt, static_cast<int32_t>(n.rhs->literal), 0});
        return dl;
      }
      int dr = flatten(*n.rhs, layout, code);
      code.push_back({Op::kPow, 0, 0});
      return std::max(dl, dr + 1);
    }
    default: {
      if (n.rhs) {
        int dl = flatten(*n.lhs, layout, code);
        int dr = flatten(*n.rhs, layout, code);
        static const std::map<NodeKind, Op> binops = {
            {NodeKind::kAdd, Op::kAdd}, {NodeKind::kSub, Op::kSub},
            {NodeKind::kMul, Op::kMul}, {NodeKind::kDiv, Op::kDiv},
            {NodeKind::kMin, Op::kMin}, {NodeKind::kMax, Op::kMax}};
        code.push_back({binops.at(n.kind), 0, 0});
        return std::max(dl, dr + 1);
      }
      int dl = flatten(*n.lhs, layout, code);
      static const std::map<NodeKind, Op> unops = {
          {NodeKind::kNeg, Op::kNeg},   {NodeKind::kSin, Op::kSin},
          {NodeKind::kCos, Op::kCos},   {NodeKind::kExp, Op::kExp},
          {NodeKind::kLog, Op::kLog},   {NodeKind::kTanh, Op::kTanh},
          {NodeKind::kSqrt, Op::kSqrt}, {NodeKind::kAbs, Op::kAbs}};
      code.push_back({unops.at(n.kind), 0, 0});
      return dl;
    }
  }
}

}  // namespace

int VarSet::max_subsystem() const {
  int m = 0;
  for (auto& [i, k] : x) m = std::max(m, i);
  return m;
}

int VarSet::max_u_component() const {
  return u.empty() ? -1 : u.back();
}

Expression Expression::parse(std::string_view text) {
  Parser p(text);
  Expression e;
  e.root_ = p.parse_expression();
  p.expect_end();
  collect_vars(e.root_, e.vars_);
  finish_vars(e.vars_);
  return e;
}

std::vector<Expression> Expression::parse_bundle(std::string_view text) {
  Parser p(text);
  std::vector<Expression> out;
  for (;;) {
    Expression e;
    e.root_ = p.parse_expression();
    collect_vars(e.root_, e.vars_);
    finish_vars(e.vars_);
    out.push_back(std::move(e));
    if (out.size() > 64) throw ParseError("bundle arity above 64", 1, 1);
    if (p.at_end()) break;
    if (!p.at_comma())
      throw ParseError("expected ',' or end of bundle", p.current().line, p.current().col);
    p.skip_comma();
  }
  return out;
}

std::string Expression::print() const {
  std::string out;
  print_node(root_, out);
  return out;
}

double Expression::eval_tree(const SlotLayout& layout, std::span<const double> slots) const {
  return eval_node(*root_, layout, slots);
}

Program Expression::compile(const SlotLayout& layout) const {
  Program prog;
  prog.max_stack_ = flatten(*root_, layout, prog.code_);
  if (prog.max_stack_ > kMaxProgramStack)
    throw std::out_of_range("expression too deep to compile");
  if (!vars_.uses_t && vars_.x.empty() && vars_.u.empty()) {
    std::vector<double> dummy(layout.total(), 0.0);
    prog.constant_ = true;
    prog.const_value_ = prog.eval(dummy);
  }
  return prog;
}

double Program::eval(std::span<const double> slots) const {
  double stack[kMaxProgramStack];
  int sp = 0;
  for (const Instr& ins : code_) {
    switch (ins.op) {
      case Op::kPushLit: stack[sp++] = ins.literal; break;
      case Op::kPushSlot: stack[sp++] = slots[ins.arg]; break;
      case Op::kNeg: stack[sp - 1] = -stack[sp - 1]; break;
      case Op::kAdd: --sp; stack[sp - 1] = checked(stack[sp - 1] + stack[sp], "+", stack[sp - 1], stack[sp]); break;
      case Op::kSub: --sp; stack[sp - 1] = checked(stack[sp - 1] - stack[sp], "-", stack[sp - 1], stack[sp]); break;
      case Op::kMul: --sp; stack[sp - 1] = checked(stack[sp - 1] * stack[sp], "*", stack[sp - 1], stack[sp]); break;
      case Op::kDiv: --sp; stack[sp - 1] = checked(stack[sp - 1] / stack[sp], "/", stack[sp - 1], stack[sp]); break;
      case Op::kPow: --sp; stack[sp - 1] = checked(std::pow(stack[sp - 1], stack[sp]), "^", stack[sp - 1], stack[sp]); break;
      case Op::kPowInt: {
        // square-and-multiply, LSB first; negative exponents invert at the end
        double base = stack[sp - 1];
        int e = ins.arg, ae = e < 0 ? -e : e;
        double acc = 1.0, sq = base;
        while (ae) {
          if (ae & 1) acc *= sq;
          ae >>= 1;
          if (ae) sq *= sq;
        }
        if (e < 0) acc = 1.0 / acc;
        stack[sp - 1] = checked(acc, "^", base, static_cast<double>(e));
        break;
      }
      case Op::kSin: stack[sp - 1] = std::sin(stack[sp - 1]); break;
      case Op::kCos: stack[sp - 1] = std::cos(stack[sp - 1]); break;
      case Op::kExp: stack[sp - 1] = checked(std::exp(stack[sp - 1]), "exp", stack[sp - 1]); break;
      case Op::kLog: stack[sp - 1] = checked(std::log(stack[sp - 1]), "log", stack[sp - 1]); break;
      case Op::kTanh: stack[sp - 1] = std::tanh(stack[sp - 1]); break;
      case Op::kSqrt: stack[sp - 1] = checked(std::sqrt(stack[sp - 1]), "sqrt", stack[sp - 1]); break;
      case Op::kAbs: stack[sp - 1] = std::fabs(stack[sp - 1]); break;
      case Op::kMin: --sp; stack[sp - 1] = stack[sp - 1] < stack[sp] ? stack[sp - 1] : stack[sp]; break;
      case Op::kMax: --sp; stack[sp - 1] = stack[sp - 1] > stack[sp] ? stack[sp - 1] : stack[sp]; break;
    }
  }
  return stack[0];
}

int depth(const NodePtr& node) {
  if (!node) return 0;
  return 1 + std::max(depth(node->lhs), depth(node->rhs));
}

}  // namespace cascade::expr
