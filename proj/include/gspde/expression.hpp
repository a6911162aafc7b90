#pragma once

// Tiny arithmetic language for user Hamiltonians:
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' unary)?
//   primary := number | x1 | x2 | z | k | pi | fn '(' expr ')' | pow '(' expr ',' expr ')' | '(' expr ')'
//   fn      := exp | sin | cos
// Evaluated on jets, so gradients and Hessians are exact.

#include <cctype>
#include <memory>
#include <string>
#include <vector>

#include "gspde/error.hpp"
#include "gspde/jet.hpp"

namespace gspde {

class Expression {
 public:
  static Expression parse(const std::string& text) {
    Parser p{text, 0};
    Expression e;
    e.root_ = p.expr();
    p.skip();
    if (p.pos != text.size()) p.fail("unexpected '" + std::string(1, text[p.pos]) + "'");
    e.text_ = text;
    return e;
  }

  Jet2 operator()(const Jet2& x1, const Jet2& x2) const { return eval(*root_, x1, x2); }

  Jet2 at(double x1, double x2) const {
    return (*this)(Jet2::variable(x1, 0), Jet2::variable(x2, 1));
  }

  const std::string& text() const { return text_; }

 private:
  enum class Op { Num, X1, X2, Add, Sub, Mul, Div, Neg, Pow, Exp, Sin, Cos, Log, Sqrt };

  struct Node {
    Op op = Op::Num;
    double value = 0.0;
    std::shared_ptr<Node> a, b;
  };
  using NodePtr = std::shared_ptr<Node>;

  static NodePtr make(Op op, NodePtr a = nullptr, NodePtr b = nullptr) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
  }

  struct Parser {
    const std::string& s;
    std::size_t pos;

    [[noreturn]] void fail(const std::string& what) const {
      throw Error(ErrorCode::ParseError,
                  "expression '" + s + "' at column " + std::to_string(pos + 1) + ": " + what);
    }

    void skip() {
      while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }

    bool accept(char c) {
      skip();
      if (pos < s.size() && s[pos] == c) {
        ++pos;
        return true;
      }
      return false;
    }

    void expect(char c) {
      if (!accept(c)) fail(std::string("expected '") + c + "'");
    }

    NodePtr expr() {
      NodePtr lhs = term();
      for (;;) {
        if (accept('+')) {
          lhs = make(Op::Add, lhs, term());
        } else if (accept('-')) {
          lhs = make(Op::Sub, lhs, term());
        } else {
          return lhs;
        }
      }
    }

    NodePtr term() {
      NodePtr lhs = unary();
      for (;;) {
        if (accept('*')) {
          lhs = make(Op::Mul, lhs, unary());
        } else if (accept('/')) {
          lhs = make(Op::Div, lhs, unary());
        } else {
          return lhs;
        }
      }
    }

    NodePtr unary() {
      if (accept('-')) return make(Op::Neg, unary());
      if (accept('+')) return unary();
      return power();
    }

    NodePtr power() {
      NodePtr base = primary();
      if (accept('^')) return make(Op::Pow, base, unary());
      return base;
    }

    NodePtr primary() {
      skip();
      if (pos >= s.size()) fail("unexpected end");
      const char c = s[pos];
      if (c == '(') {
        ++pos;
        NodePtr e = expr();
        expect(')');
        return e;
      }
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        std::size_t used = 0;
        double v = 0.0;
        try {
          v = std::stod(s.substr(pos), &used);
        } catch (const std::exception&) {
          fail("bad number");
        }
        pos += used;
        auto n = make(Op::Num);
        n->value = v;
        return n;
      }
      if (std::isalpha(static_cast<unsigned char>(c))) {
        std::size_t end = pos;
        while (end < s.size() && std::isalnum(static_cast<unsigned char>(s[end]))) ++end;
        const std::string word = s.substr(pos, end - pos);
        pos = end;
        // z and k name the same slots for functions on a graph
        if (word == "x1" || word == "z") return make(Op::X1);
        if (word == "x2" || word == "k") return make(Op::X2);
        if (word == "pi") {
          auto n = make(Op::Num);
          n->value = M_PI;
          return n;
        }
        if (word == "exp" || word == "sin" || word == "cos" || word == "log" || word == "sqrt") {
          expect('(');
          NodePtr arg = expr();
          expect(')');
          const Op op = word == "exp"   ? Op::Exp
                         : word == "sin" ? Op::Sin
                         : word == "cos" ? Op::Cos
                         : word == "log" ? Op::Log
                                         : Op::Sqrt;
          return make(op, arg);
        }
        if (word == "pow") {
          expect('(');
          NodePtr a = expr();
          expect(',');
          NodePtr b = expr();
          expect(')');
          return make(Op::Pow, a, b);
        }
        pos -= word.size();
        fail("unknown identifier '" + word + "'");
      }
      fail(std::string("unexpected '") + c + "'");
    }
  };

  static Jet2 eval(const Node& n, const Jet2& x1, const Jet2& x2) {
    switch (n.op) {
      case Op::Num: return Jet2(n.value);
      case Op::X1: return x1;
      case Op::X2: return x2;
      case Op::Add: return eval(*n.a, x1, x2) + eval(*n.b, x1, x2);
      case Op::Sub: return eval(*n.a, x1, x2) - eval(*n.b, x1, x2);
      case Op::Mul: return eval(*n.a, x1, x2) * eval(*n.b, x1, x2);
      case Op::Div: return eval(*n.a, x1, x2) / eval(*n.b, x1, x2);
      case Op::Neg: return -eval(*n.a, x1, x2);
      case Op::Pow: return pow(eval(*n.a, x1, x2), eval(*n.b, x1, x2));
      case Op::Exp: return exp(eval(*n.a, x1, x2));
      case Op::Sin: return sin(eval(*n.a, x1, x2));
      case Op::Cos: return cos(eval(*n.a, x1, x2));
      case Op::Log: return log(eval(*n.a, x1, x2));
      case Op::Sqrt: return sqrt(eval(*n.a, x1, x2));
    }
    return Jet2();
  }

  NodePtr root_;
  std::string text_;
};

}  // namespace gspde
