#ifndef HJBFEM_EXPRESSION_HPP
#define HJBFEM_EXPRESSION_HPP

#include <memory>
#include <string>

namespace hjbfem {

/**
 * Arithmetic expression over the coordinates x and y.
 *
 * Grammar: numbers, the variables x and y, the constants pi and e, binary
 * + - * / and ^, unary minus, parentheses, and the functions
 * abs, sqrt, sin, cos, exp (one argument) and min, max (two or more).
 */
class Expression {
public:
    /// Throws ParseError with the offending position.
    static Expression parse(const std::string &text);

    double operator()(double x, double y) const;

    const std::string &text() const { return text_; }

    /// True when the expression does not reference x or y.
    bool is_constant() const;

    struct Node;

private:
    std::string text_;
    std::shared_ptr<const Node> root_;
};

} // namespace hjbfem

#endif
