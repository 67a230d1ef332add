#pragma once
// Modular arithmetic expressions over single-digit literals with + - * /.

#include <string>
#include <vector>

namespace dagtf::graph {

struct ExprNode {
  char op = 0;  // 0 for a literal
  int value = 0;
  int lhs = -1;
  int rhs = -1;
};

struct ExprTree {
  std::vector<ExprNode> nodes;
  int root = -1;

  bool is_literal(int id) const { return nodes[id].op == 0; }
  int operator_count() const;
};

ExprTree parse_expr(const std::string& text);
// Minimal parentheses; a right operand of equal precedence is always
// parenthesised so that parse(print(e)) keeps the tree shape.
std::string print_expr(const ExprTree& e);
int apply_op(char op, int a, int b, int modulus);
int eval_expr(const ExprTree& e, int modulus);
// Replaces the leftmost operator whose operands are both literals by its
// value. Returns false when e is already a literal.
bool reduce_innermost(ExprTree& e, int modulus);
// Printed forms from e down to its value, inclusive at both ends.
std::vector<std::string> reduction_trace(const ExprTree& e, int modulus);

}  // namespace dagtf::graph
