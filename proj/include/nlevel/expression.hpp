#pragma once

#include <memory>
#include <string>

#include "nlevel/linalg_spectral.hpp"

namespace nlevel {

/// Closed-form scalar expression in the complex variable z.
///
/// Grammar: sums, differences, products, quotients, unary minus, integer powers
/// (`^n`), parentheses, the functions tanh, sech, exp, numeric literals, `i`, `pi`
/// and the variable `z`.
class Expression {
public:
    struct Node;

    Expression();
    static Expression parse(const std::string& text);
    static Expression constant(Complex c);

    Complex operator()(Complex z) const;
    Expression derivative() const;
    std::string to_string() const;
    bool is_constant_zero() const;

private:
    explicit Expression(std::shared_ptr<const Node> root);
    std::shared_ptr<const Node> root_;
};

}  // namespace nlevel
