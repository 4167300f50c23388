#include "cavspec/expr.hpp"

#include <cctype>
#include <cmath>
#include <sstream>
#include <vector>

namespace cavspec::expr {

Dual3 operator+(const Dual3& a, const Dual3& b) {
    return {a.v + b.v, {a.d[0] + b.d[0], a.d[1] + b.d[1], a.d[2] + b.d[2]}};
}

Dual3 operator-(const Dual3& a, const Dual3& b) {
    return {a.v - b.v, {a.d[0] - b.d[0], a.d[1] - b.d[1], a.d[2] - b.d[2]}};
}

Dual3 operator-(const Dual3& a) { return {-a.v, {-a.d[0], -a.d[1], -a.d[2]}}; }

Dual3 operator*(const Dual3& a, const Dual3& b) {
    return {a.v * b.v,
            {a.d[0] * b.v + a.v * b.d[0], a.d[1] * b.v + a.v * b.d[1],
             a.d[2] * b.v + a.v * b.d[2]}};
}

Dual3 operator/(const Dual3& a, const Dual3& b) {
    const double inv = 1.0 / b.v;
    const double q = a.v * inv;
    return {q,
            {(a.d[0] - q * b.d[0]) * inv, (a.d[1] - q * b.d[1]) * inv,
             (a.d[2] - q * b.d[2]) * inv}};
}

namespace detail {

enum class Op { Const, Var, Add, Sub, Mul, Div, Neg, Pow, Sin, Cos, Exp, Bump };

struct Node {
    Op op = Op::Const;
    double value = 0.0; // Const payload
    int axis = 0;       // Var payload
    int exponent = 0;   // Pow payload
    std::shared_ptr<const Node> a, b;
};

using NodePtr = std::shared_ptr<const Node>;

namespace {

NodePtr make_const(double v) {
    auto n = std::make_shared<Node>();
    n->op = Op::Const;
    n->value = v;
    return n;
}

NodePtr make_unary(Op op, NodePtr a) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->a = std::move(a);
    return n;
}

NodePtr make_binary(Op op, NodePtr a, NodePtr b) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
}

Dual3 eval_node(const Node& n, const std::array<double, 3>& x) {
    switch (n.op) {
    case Op::Const:
        return Dual3::constant(n.value);
    case Op::Var:
        return Dual3::variable(x[static_cast<std::size_t>(n.axis)], n.axis);
    case Op::Add:
        return eval_node(*n.a, x) + eval_node(*n.b, x);
    case Op::Sub:
        return eval_node(*n.a, x) - eval_node(*n.b, x);
    case Op::Mul:
        return eval_node(*n.a, x) * eval_node(*n.b, x);
    case Op::Div:
        return eval_node(*n.a, x) / eval_node(*n.b, x);
    case Op::Neg:
        return -eval_node(*n.a, x);
    case Op::Pow: {
        const Dual3 base = eval_node(*n.a, x);
        int e = n.exponent;
        if (e == 0) return Dual3::constant(1.0);
        Dual3 acc = base;
        for (int i = 1; i < e; ++i) acc = acc * base;
        return acc;
    }
    case Op::Sin: {
        const Dual3 u = eval_node(*n.a, x);
        const double s = std::sin(u.v), c = std::cos(u.v);
        return {s, {c * u.d[0], c * u.d[1], c * u.d[2]}};
    }
    case Op::Cos: {
        const Dual3 u = eval_node(*n.a, x);
        const double s = std::sin(u.v), c = std::cos(u.v);
        return {c, {-s * u.d[0], -s * u.d[1], -s * u.d[2]}};
    }
    case Op::Exp: {
        const Dual3 u = eval_node(*n.a, x);
        const double e = std::exp(u.v);
        return {e, {e * u.d[0], e * u.d[1], e * u.d[2]}};
    }
    case Op::Bump: {
        const Dual3 u = eval_node(*n.a, x);
        if (std::abs(u.v) >= 1.0) return Dual3::constant(0.0);
        const double w = 1.0 - u.v * u.v;
        const double g = -4.0 * u.v * w; // d/ds (1-s^2)^2
        return {w * w, {g * u.d[0], g * u.d[1], g * u.d[2]}};
    }
    }
    return Dual3::constant(0.0);
}

bool node_is_constant(const Node& n) {
    switch (n.op) {
    case Op::Const:
        return true;
    case Op::Var:
        return false;
    case Op::Neg:
    case Op::Pow:
    case Op::Sin:
    case Op::Cos:
    case Op::Exp:
    case Op::Bump:
        return node_is_constant(*n.a);
    default:
        return node_is_constant(*n.a) && node_is_constant(*n.b);
    }
}

void render(const Node& n, std::ostream& os) {
    switch (n.op) {
    case Op::Const: {
        os << n.value;
        return;
    }
    case Op::Var:
        os << "xyz"[n.axis];
        return;
    case Op::Add:
        os << '(';
        render(*n.a, os);
        os << " + ";
        render(*n.b, os);
        os << ')';
        return;
    case Op::Sub:
        os << '(';
        render(*n.a, os);
        os << " - ";
        render(*n.b, os);
        os << ')';
        return;
    case Op::Mul:
        os << '(';
        render(*n.a, os);
        os << " * ";
        render(*n.b, os);
        os << ')';
        return;
    case Op::Div:
        os << '(';
        render(*n.a, os);
        os << " / ";
        render(*n.b, os);
        os << ')';
        return;
    case Op::Neg:
        os << "(-";
        render(*n.a, os);
        os << ')';
        return;
    case Op::Pow:
        os << '(';
        render(*n.a, os);
        os << '^' << n.exponent << ')';
        return;
    case Op::Sin:
    case Op::Cos:
    case Op::Exp:
    case Op::Bump:
        os << (n.op == Op::Sin   ? "sin"
               : n.op == Op::Cos ? "cos"
               : n.op == Op::Exp ? "exp"
                                 : "bump");
        os << '(';
        render(*n.a, os);
        os << ')';
        return;
    }
}

class Parser {
  public:
    explicit Parser(const std::string& s) : s_(s) {}

    NodePtr parse() {
        NodePtr e = expression();
        skip_ws();
        if (pos_ != s_.size()) fail("unexpected trailing input");
        return e;
    }

  private:
    NodePtr expression() {
        NodePtr lhs = term();
        for (;;) {
            skip_ws();
            if (consume('+'))
                lhs = make_binary(Op::Add, lhs, term());
            else if (consume('-'))
                lhs = make_binary(Op::Sub, lhs, term());
            else
                return lhs;
        }
    }

    NodePtr term() {
        NodePtr lhs = factor();
        for (;;) {
            skip_ws();
            if (consume('*'))
                lhs = make_binary(Op::Mul, lhs, factor());
            else if (consume('/'))
                lhs = make_binary(Op::Div, lhs, factor());
            else
                return lhs;
        }
    }

    NodePtr factor() {
        skip_ws();
        if (consume('-')) return make_unary(Op::Neg, factor());
        NodePtr base = primary();
        skip_ws();
        if (consume('^')) {
            skip_ws();
            std::size_t start = pos_;
            while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
            if (start == pos_) fail("expected a nonnegative integer exponent");
            auto n = std::make_shared<Node>();
            n->op = Op::Pow;
            n->exponent = std::stoi(s_.substr(start, pos_ - start));
            n->a = base;
            return n;
        }
        return base;
    }

    NodePtr primary() {
        skip_ws();
        if (pos_ >= s_.size()) fail("unexpected end of expression");
        const char c = s_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (consume('(')) {
            NodePtr e = expression();
            expect(')');
            return e;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
        fail("unexpected character");
        return nullptr;
    }

    NodePtr number() {
        std::size_t end = pos_;
        auto digits = [&] {
            while (end < s_.size() && std::isdigit(static_cast<unsigned char>(s_[end]))) ++end;
        };
        digits();
        if (end < s_.size() && s_[end] == '.') {
            ++end;
            digits();
        }
        if (end < s_.size() && (s_[end] == 'e' || s_[end] == 'E')) {
            std::size_t mark = end++;
            if (end < s_.size() && (s_[end] == '+' || s_[end] == '-')) ++end;
            if (end < s_.size() && std::isdigit(static_cast<unsigned char>(s_[end])))
                digits();
            else
                end = mark;
        }
        const double v = std::stod(s_.substr(pos_, end - pos_));
        pos_ = end;
        return make_const(v);
    }

    NodePtr identifier() {
        std::size_t end = pos_;
        while (end < s_.size() &&
               (std::isalnum(static_cast<unsigned char>(s_[end])) || s_[end] == '_'))
            ++end;
        const std::string name = s_.substr(pos_, end - pos_);
        pos_ = end;
        if (name == "pi") return make_const(M_PI);
        if (name == "x" || name == "x1") return var(0);
        if (name == "y" || name == "x2") return var(1);
        if (name == "z" || name == "x3") return var(2);
        Op op;
        if (name == "sin")
            op = Op::Sin;
        else if (name == "cos")
            op = Op::Cos;
        else if (name == "exp")
            op = Op::Exp;
        else if (name == "bump")
            op = Op::Bump;
        else
            fail("unknown identifier '" + name + "'");
        skip_ws();
        expect('(');
        NodePtr arg = expression();
        expect(')');
        return make_unary(op, arg);
    }

    static NodePtr var(int axis) {
        auto n = std::make_shared<Node>();
        n->op = Op::Var;
        n->axis = axis;
        return n;
    }

    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool consume(char c) {
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c) {
        skip_ws();
        if (!consume(c)) fail(std::string("expected '") + c + "'");
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError("expression parse error at position " + std::to_string(pos_) + ": " +
                         msg);
    }

    const std::string& s_;
    std::size_t pos_ = 0;
};

} // namespace
} // namespace detail

ScalarExpr::ScalarExpr() : root_(detail::make_const(0.0)) {}

ScalarExpr::ScalarExpr(std::shared_ptr<const detail::Node> root) : root_(std::move(root)) {}

ScalarExpr ScalarExpr::parse(const std::string& text) {
    return ScalarExpr(detail::Parser(text).parse());
}

ScalarExpr ScalarExpr::constant(double c) { return ScalarExpr(detail::make_const(c)); }

ScalarExpr ScalarExpr::variable(int axis) {
    auto n = std::make_shared<detail::Node>();
    n->op = detail::Op::Var;
    n->axis = axis;
    return ScalarExpr(std::move(n));
}

ScalarExpr ScalarExpr::bump1d(int axis, double center, double radius) {
    auto arg = detail::make_binary(
        detail::Op::Div,
        detail::make_binary(detail::Op::Sub, ScalarExpr::variable(axis).root_,
                            detail::make_const(center)),
        detail::make_const(radius));
    return ScalarExpr(detail::make_unary(detail::Op::Bump, std::move(arg)));
}

ScalarExpr ScalarExpr::operator+(const ScalarExpr& rhs) const {
    return ScalarExpr(detail::make_binary(detail::Op::Add, root_, rhs.root_));
}

ScalarExpr ScalarExpr::operator-(const ScalarExpr& rhs) const {
    return ScalarExpr(detail::make_binary(detail::Op::Sub, root_, rhs.root_));
}

ScalarExpr ScalarExpr::operator*(const ScalarExpr& rhs) const {
    return ScalarExpr(detail::make_binary(detail::Op::Mul, root_, rhs.root_));
}

ScalarExpr ScalarExpr::scaled(double factor) const {
    return ScalarExpr(detail::make_binary(detail::Op::Mul, detail::make_const(factor), root_));
}

Dual3 ScalarExpr::eval(const std::array<double, 3>& x) const {
    return detail::eval_node(*root_, x);
}

double ScalarExpr::value(const std::array<double, 3>& x) const { return eval(x).v; }

bool ScalarExpr::is_zero() const {
    return root_->op == detail::Op::Const && root_->value == 0.0;
}

bool ScalarExpr::is_constant() const { return detail::node_is_constant(*root_); }

std::string ScalarExpr::text() const {
    std::ostringstream os;
    os.precision(17);
    detail::render(*root_, os);
    return os.str();
}

} // namespace cavspec::expr
