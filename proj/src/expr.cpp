#include "dagtf/expr.hpp"

#include <cctype>
#include <functional>
#include <stdexcept>

#include "dagtf/errors.hpp"

namespace dagtf::graph {

namespace {

int precedence(char op) { return (op == '+' || op == '-') ? 1 : 2; }

class ExprParser {
 public:
  explicit ExprParser(const std::string& text) : text_(text) {}

  ExprTree run() {
    ExprTree e;
    tree_ = &e;
    e.root = sum();
    if (pos_ != text_.size()) fail("unexpected character");
    return e;
  }

 private:
  int sum() {
    int lhs = product();
    while (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) {
      const char op = text_[pos_++];
      lhs = make(op, lhs, product());
    }
    return lhs;
  }

  int product() {
    int lhs = atom();
    while (pos_ < text_.size() && (text_[pos_] == '*' || text_[pos_] == '/')) {
      const char op = text_[pos_++];
      lhs = make(op, lhs, atom());
    }
    return lhs;
  }

  int atom() {
    if (pos_ >= text_.size()) fail("unexpected end of expression");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      const int inner = sum();
      if (pos_ >= text_.size() || text_[pos_] != ')') fail("expected ')'");
      ++pos_;
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      ++pos_;
      tree_->nodes.push_back({0, c - '0', -1, -1});
      return static_cast<int>(tree_->nodes.size()) - 1;
    }
    fail("expected digit or '('");
    return -1;
  }

  int make(char op, int lhs, int rhs) {
    tree_->nodes.push_back({op, 0, lhs, rhs});
    return static_cast<int>(tree_->nodes.size()) - 1;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("expression: " + what, 1, static_cast<int>(pos_) + 1);
  }

  const std::string& text_;
  std::size_t pos_ = 0;
  ExprTree* tree_ = nullptr;
};

void print_rec(const ExprTree& e, int id, std::string& out) {
  const ExprNode& n = e.nodes[id];
  if (n.op == 0) {
    out += static_cast<char>('0' + n.value);
    return;
  }
  const int p = precedence(n.op);
  const auto child = [&](int c, bool right) {
    const ExprNode& cn = e.nodes[c];
    const bool paren = cn.op != 0 && (precedence(cn.op) < p || (right && precedence(cn.op) == p));
    if (paren) out += '(';
    print_rec(e, c, out);
    if (paren) out += ')';
  };
  child(n.lhs, false);
  out += n.op;
  child(n.rhs, true);
}

int inverse_mod(int b, int modulus) {
  for (int y = 1; y < modulus; ++y)
    if ((b * y) % modulus == 1) return y;
  return -1;
}

}  // namespace

int ExprTree::operator_count() const {
  // Count only nodes reachable from the root; reductions leave orphans.
  int count = 0;
  std::function<void(int)> walk = [&](int id) {
    if (nodes[id].op == 0) return;
    ++count;
    walk(nodes[id].lhs);
    walk(nodes[id].rhs);
  };
  if (root >= 0) walk(root);
  return count;
}

ExprTree parse_expr(const std::string& text) { return ExprParser(text).run(); }

std::string print_expr(const ExprTree& e) {
  std::string out;
  print_rec(e, e.root, out);
  return out;
}

int apply_op(char op, int a, int b, int modulus) {
  switch (op) {
    case '+': return (a + b) % modulus;
    case '-': return ((a - b) % modulus + modulus) % modulus;
    case '*': return (a * b) % modulus;
    case '/': {
      const int inv = inverse_mod(b, modulus);
      return inv < 0 ? 0 : (a * inv) % modulus;
    }
    default: throw std::invalid_argument(std::string("unknown operator ") + op);
  }
}

int eval_expr(const ExprTree& e, int modulus) {
  std::function<int(int)> rec = [&](int id) -> int {
    const ExprNode& n = e.nodes[id];
    if (n.op == 0) return n.value % modulus;
    return apply_op(n.op, rec(n.lhs), rec(n.rhs), modulus);
  };
  return rec(e.root);
}

bool reduce_innermost(ExprTree& e, int modulus) {
  if (e.is_literal(e.root)) return false;
  std::function<bool(int)> rec = [&](int id) -> bool {
    ExprNode& n = e.nodes[id];
    if (n.op == 0) return false;
    if (e.is_literal(n.lhs) && e.is_literal(n.rhs)) {
      n.value = apply_op(n.op, e.nodes[n.lhs].value, e.nodes[n.rhs].value, modulus);
      n.op = 0;
      n.lhs = n.rhs = -1;
      return true;
    }
    return rec(n.lhs) || rec(n.rhs);
  };
  return rec(e.root);
}

std::vector<std::string> reduction_trace(const ExprTree& e, int modulus) {
  ExprTree cur = e;
  std::vector<std::string> out{print_expr(cur)};
  while (reduce_innermost(cur, modulus)) out.push_back(print_expr(cur));
  return out;
}

}  // namespace dagtf::graph
