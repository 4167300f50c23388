#pragma once

#include <array>
#include <memory>
#include <stdexcept>
#include <string>

namespace cavspec::expr {

/// Value together with its spatial gradient; the arithmetic below propagates
/// exact first derivatives through every expression node.
struct Dual3 {
    double v = 0.0;
    std::array<double, 3> d{0.0, 0.0, 0.0};

    static Dual3 constant(double c) { return {c, {0.0, 0.0, 0.0}}; }
    static Dual3 variable(double value, int axis) {
        Dual3 r{value, {0.0, 0.0, 0.0}};
        r.d[static_cast<std::size_t>(axis)] = 1.0;
        return r;
    }
};

Dual3 operator+(const Dual3& a, const Dual3& b);
Dual3 operator-(const Dual3& a, const Dual3& b);
Dual3 operator-(const Dual3& a);
Dual3 operator*(const Dual3& a, const Dual3& b);
Dual3 operator/(const Dual3& a, const Dual3& b);

namespace detail {
struct Node;
}

/// Scalar expression in the coordinates x, y, z with exact derivatives.
///
/// Supported grammar: numbers, `pi`, variables x|y|z (aliases x1|x2|x3),
/// + - * /, unary minus, integer powers `^`, parentheses, and the functions
/// sin, cos, exp and bump.  `bump(s)` is the C^1 compactly supported profile
/// (1 - s^2)^2 for |s| < 1 and 0 elsewhere.
class ScalarExpr {
  public:
    ScalarExpr(); // the zero expression

    static ScalarExpr parse(const std::string& text);
    static ScalarExpr constant(double c);
    static ScalarExpr variable(int axis);
    /// bump((x_axis - center)/radius)
    static ScalarExpr bump1d(int axis, double center, double radius);

    ScalarExpr operator+(const ScalarExpr& rhs) const;
    ScalarExpr operator-(const ScalarExpr& rhs) const;
    ScalarExpr operator*(const ScalarExpr& rhs) const;
    ScalarExpr scaled(double factor) const;

    Dual3 eval(const std::array<double, 3>& x) const;
    double value(const std::array<double, 3>& x) const;

    bool is_zero() const;       // structurally the zero expression
    bool is_constant() const;   // no variable reference anywhere
    std::string text() const;   // round-trippable rendering

  private:
    explicit ScalarExpr(std::shared_ptr<const detail::Node> root);
    std::shared_ptr<const detail::Node> root_;
};

/// Thrown by ScalarExpr::parse with a position-annotated message.
struct ParseError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

} // namespace cavspec::expr
