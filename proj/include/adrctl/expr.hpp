#pragma once

// Closed-form field expressions over x and y:
//   expr   := term (('+' | '-') term)*
//   term   := unary (('*' | '/') unary)*
//   unary  := ('-' | '+') unary | power
//   power  := atom ('^' unary)?
//   atom   := number | 'x' | 'y' | 'pi' | name '(' expr ')' | '(' expr ')'
// with name ∈ {sin, cos, tan, exp, log, sqrt, abs, tanh}.

#include <memory>
#include <string>

namespace adrctl {

class Expression {
public:
    /// Throws ConfigError with the offending position on a syntax error.
    static Expression parse(const std::string& text);

    double operator()(double x, double y = 0.0) const;
    const std::string& text() const { return text_; }

    struct Node;

private:
    std::string text_;
    std::shared_ptr<const Node> root_;
};

}  // namespace adrctl
