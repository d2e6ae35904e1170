#pragma once

// Sandboxed arithmetic expressions used for user-defined utilities.
//
// Grammar:
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' unary)?
//   primary := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'
//
// Functions: min, max (variadic), sqrt, pow. Names resolve against a fixed
// variable table supplied at parse time; nothing else is reachable.

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fairdiv/errors.hpp"

namespace fairdiv {

class Expression {
 public:
  /// Parses `text`; `variables[i]` is bound to argument slot i at evaluation.
  static Expression parse(std::string_view text, std::vector<std::string> variables) {
    Parser parser{text, variables, 0};
    auto root = parser.parse_expr();
    parser.skip_ws();
    if (parser.pos != text.size()) {
      parser.fail("unexpected trailing input");
    }
    return Expression(std::string(text), std::move(variables), std::move(root));
  }

  double operator()(std::span<const double> args) const {
    if (args.size() < variables_.size()) {
      throw Error(ErrorCode::ShapeMismatch, "expression expects " + std::to_string(variables_.size()) +
                                                " arguments, got " + std::to_string(args.size()));
    }
    return root_->eval(args);
  }

  const std::string& text() const { return text_; }
  const std::vector<std::string>& variables() const { return variables_; }

 private:
  struct Node {
    enum class Kind { Number, Var, Neg, Add, Sub, Mul, Div, Pow, Min, Max, Sqrt };
    Kind kind;
    double value = 0.0;
    std::size_t slot = 0;
    std::vector<std::unique_ptr<Node>> children;

    double eval(std::span<const double> args) const {
      switch (kind) {
        case Kind::Number: return value;
        case Kind::Var: return args[slot];
        case Kind::Neg: return -children[0]->eval(args);
        case Kind::Add: return children[0]->eval(args) + children[1]->eval(args);
        case Kind::Sub: return children[0]->eval(args) - children[1]->eval(args);
        case Kind::Mul: return children[0]->eval(args) * children[1]->eval(args);
        case Kind::Div: return children[0]->eval(args) / children[1]->eval(args);
        case Kind::Pow: return std::pow(children[0]->eval(args), children[1]->eval(args));
        case Kind::Sqrt: return std::sqrt(children[0]->eval(args));
        case Kind::Min: {
          double best = children[0]->eval(args);
          for (std::size_t i = 1; i < children.size(); ++i) best = std::min(best, children[i]->eval(args));
          return best;
        }
        case Kind::Max: {
          double best = children[0]->eval(args);
          for (std::size_t i = 1; i < children.size(); ++i) best = std::max(best, children[i]->eval(args));
          return best;
        }
      }
      return 0.0;
    }
  };
  using NodePtr = std::unique_ptr<Node>;

  struct Parser {
    std::string_view text;
    const std::vector<std::string>& variables;
    std::size_t pos;

    [[noreturn]] void fail(const std::string& msg) const {
      throw Error(ErrorCode::InvalidSpec,
                  "expression '" + std::string(text) + "' at column " + std::to_string(pos + 1) + ": " + msg);
    }

    void skip_ws() {
      while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    }

    bool eat(char c) {
      skip_ws();
      if (pos < text.size() && text[pos] == c) {
        ++pos;
        return true;
      }
      return false;
    }

    static NodePtr make(Node::Kind kind, NodePtr lhs = nullptr, NodePtr rhs = nullptr) {
      auto node = std::make_unique<Node>();
      node->kind = kind;
      if (lhs) node->children.push_back(std::move(lhs));
      if (rhs) node->children.push_back(std::move(rhs));
      return node;
    }

    NodePtr parse_expr() {
      auto lhs = parse_term();
      for (;;) {
        if (eat('+')) {
          lhs = make(Node::Kind::Add, std::move(lhs), parse_term());
        } else if (eat('-')) {
          lhs = make(Node::Kind::Sub, std::move(lhs), parse_term());
        } else {
          return lhs;
        }
      }
    }

    NodePtr parse_term() {
      auto lhs = parse_unary();
      for (;;) {
        if (eat('*')) {
          lhs = make(Node::Kind::Mul, std::move(lhs), parse_unary());
        } else if (eat('/')) {
          lhs = make(Node::Kind::Div, std::move(lhs), parse_unary());
        } else {
          return lhs;
        }
      }
    }

    NodePtr parse_unary() {
      if (eat('-')) return make(Node::Kind::Neg, parse_unary());
      if (eat('+')) return parse_unary();
      return parse_power();
    }

    NodePtr parse_power() {
      auto base = parse_primary();
      if (eat('^')) return make(Node::Kind::Pow, std::move(base), parse_unary());
      return base;
    }

    NodePtr parse_primary() {
      skip_ws();
      if (pos >= text.size()) fail("unexpected end of input");
      const char c = text[pos];
      if (eat('(')) {
        auto inner = parse_expr();
        if (!eat(')')) fail("expected ')'");
        return inner;
      }
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        const std::string tail(text.substr(pos));
        char* end = nullptr;
        const double value = std::strtod(tail.c_str(), &end);
        if (end == tail.c_str()) fail("bad number");
        pos += static_cast<std::size_t>(end - tail.c_str());
        auto node = make(Node::Kind::Number);
        node->value = value;
        return node;
      }
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        const std::size_t start = pos;
        while (pos < text.size() &&
               (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_')) {
          ++pos;
        }
        const std::string name(text.substr(start, pos - start));
        if (eat('(')) return parse_call(name);
        for (std::size_t i = 0; i < variables.size(); ++i) {
          if (variables[i] == name) {
            auto node = make(Node::Kind::Var);
            node->slot = i;
            return node;
          }
        }
        pos = start;
        fail("unknown variable '" + name + "'");
      }
      fail(std::string("unexpected character '") + c + "'");
    }

    NodePtr parse_call(const std::string& name) {
      std::vector<NodePtr> args;
      if (!eat(')')) {
        do {
          args.push_back(parse_expr());
        } while (eat(','));
        if (!eat(')')) fail("expected ')' after arguments");
      }
      Node::Kind kind;
      if (name == "min") {
        kind = Node::Kind::Min;
        if (args.empty()) fail("min() needs arguments");
      } else if (name == "max") {
        kind = Node::Kind::Max;
        if (args.empty()) fail("max() needs arguments");
      } else if (name == "sqrt") {
        kind = Node::Kind::Sqrt;
        if (args.size() != 1) fail("sqrt() takes one argument");
      } else if (name == "pow") {
        kind = Node::Kind::Pow;
        if (args.size() != 2) fail("pow() takes two arguments");
      } else {
        fail("unknown function '" + name + "'");
      }
      auto node = make(kind);
      node->children = std::move(args);
      return node;
    }
  };

  Expression(std::string text, std::vector<std::string> variables, NodePtr root)
      : text_(std::move(text)), variables_(std::move(variables)), root_(std::move(root)) {}

  std::string text_;
  std::vector<std::string> variables_;
  std::shared_ptr<const Node> root_;
};

}  // namespace fairdiv
