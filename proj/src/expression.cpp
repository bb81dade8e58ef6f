#include "nlevel/expression.hpp"

#include <cctype>
#include <cmath>
#include <numbers>
#include <sstream>

#include "nlevel/errors.hpp"

namespace nlevel {

struct Expression::Node {
    enum class Kind { Const, Var, Add, Sub, Mul, Div, Neg, Pow, Tanh, Sech, Exp };
    Kind kind;
    Complex value{};
    int power = 0;
    std::shared_ptr<const Node> a, b;
};

namespace {

using Node = Expression::Node;
using NodePtr = std::shared_ptr<const Node>;
using Kind = Node::Kind;

NodePtr make(Kind k, NodePtr a = nullptr, NodePtr b = nullptr) {
    auto n = std::make_shared<Node>();
    n->kind = k;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
}

NodePtr make_const(Complex c) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::Const;
    n->value = c;
    return n;
}

bool is_const(const NodePtr& n, Complex c) { return n->kind == Kind::Const && n->value == c; }

NodePtr add(NodePtr a, NodePtr b) {
    if (is_const(a, 0.0)) return b;
    if (is_const(b, 0.0)) return a;
    if (a->kind == Kind::Const && b->kind == Kind::Const) return make_const(a->value + b->value);
    return make(Kind::Add, std::move(a), std::move(b));
}

NodePtr sub(NodePtr a, NodePtr b) {
    if (is_const(b, 0.0)) return a;
    if (a->kind == Kind::Const && b->kind == Kind::Const) return make_const(a->value - b->value);
    if (is_const(a, 0.0)) return make(Kind::Neg, std::move(b));
    return make(Kind::Sub, std::move(a), std::move(b));
}

NodePtr mul(NodePtr a, NodePtr b) {
    if (is_const(a, 0.0) || is_const(b, 0.0)) return make_const(0.0);
    if (is_const(a, 1.0)) return b;
    if (is_const(b, 1.0)) return a;
    if (a->kind == Kind::Const && b->kind == Kind::Const) return make_const(a->value * b->value);
    return make(Kind::Mul, std::move(a), std::move(b));
}

NodePtr divide(NodePtr a, NodePtr b) {
    if (is_const(a, 0.0)) return make_const(0.0);
    if (is_const(b, 1.0)) return a;
    return make(Kind::Div, std::move(a), std::move(b));
}

NodePtr neg(NodePtr a) {
    if (a->kind == Kind::Const) return make_const(-a->value);
    return make(Kind::Neg, std::move(a));
}

NodePtr pow_node(NodePtr a, int p) {
    if (p == 0) return make_const(1.0);
    if (p == 1) return a;
    auto n = std::make_shared<Node>();
    n->kind = Kind::Pow;
    n->power = p;
    n->a = std::move(a);
    return n;
}

Complex eval(const Node& n, Complex z) {
    switch (n.kind) {
        case Kind::Const: return n.value;
        case Kind::Var: return z;
        case Kind::Add: return eval(*n.a, z) + eval(*n.b, z);
        case Kind::Sub: return eval(*n.a, z) - eval(*n.b, z);
        case Kind::Mul: return eval(*n.a, z) * eval(*n.b, z);
        case Kind::Div: return eval(*n.a, z) / eval(*n.b, z);
        case Kind::Neg: return -eval(*n.a, z);
        case Kind::Pow: {
            const Complex base = eval(*n.a, z);
            Complex r = 1.0;
            for (int k = 0; k < std::abs(n.power); ++k) r *= base;
            return n.power < 0 ? 1.0 / r : r;
        }
        case Kind::Tanh: return std::tanh(eval(*n.a, z));
        case Kind::Sech: return 1.0 / std::cosh(eval(*n.a, z));
        case Kind::Exp: return std::exp(eval(*n.a, z));
    }
    return 0.0;
}

NodePtr derive(const NodePtr& n) {
    switch (n->kind) {
        case Kind::Const: return make_const(0.0);
        case Kind::Var: return make_const(1.0);
        case Kind::Add: return add(derive(n->a), derive(n->b));
        case Kind::Sub: return sub(derive(n->a), derive(n->b));
        case Kind::Mul: return add(mul(derive(n->a), n->b), mul(n->a, derive(n->b)));
        case Kind::Div:
            return divide(sub(mul(derive(n->a), n->b), mul(n->a, derive(n->b))), pow_node(n->b, 2));
        case Kind::Neg: return neg(derive(n->a));
        case Kind::Pow:
            return mul(mul(make_const(static_cast<double>(n->power)), pow_node(n->a, n->power - 1)), derive(n->a));
        case Kind::Tanh: return mul(pow_node(make(Kind::Sech, n->a), 2), derive(n->a));
        case Kind::Sech: return mul(neg(mul(n, make(Kind::Tanh, n->a))), derive(n->a));
        case Kind::Exp: return mul(n, derive(n->a));
    }
    return make_const(0.0);
}

std::string format_complex(Complex c) {
    std::ostringstream os;
    os.precision(17);
    if (c.imag() == 0.0) {
        os << c.real();
    } else {
        os << "(" << c.real() << (c.imag() < 0 ? "-" : "+") << std::abs(c.imag()) << "*i)";
    }
    return os.str();
}

std::string print(const Node& n) {
    switch (n.kind) {
        case Kind::Const: return format_complex(n.value);
        case Kind::Var: return "z";
        case Kind::Add: return "(" + print(*n.a) + " + " + print(*n.b) + ")";
        case Kind::Sub: return "(" + print(*n.a) + " - " + print(*n.b) + ")";
        case Kind::Mul: return "(" + print(*n.a) + " * " + print(*n.b) + ")";
        case Kind::Div: return "(" + print(*n.a) + " / " + print(*n.b) + ")";
        case Kind::Neg: return "(-" + print(*n.a) + ")";
        case Kind::Pow: return "(" + print(*n.a) + ")^" + std::to_string(n.power);
        case Kind::Tanh: return "tanh(" + print(*n.a) + ")";
        case Kind::Sech: return "sech(" + print(*n.a) + ")";
        case Kind::Exp: return "exp(" + print(*n.a) + ")";
    }
    return "";
}

class Parser {
public:
    explicit Parser(const std::string& s) : s_(s) {}

    NodePtr parse() {
        auto n = expr();
        skip();
        if (pos_ != s_.size()) fail("unexpected character '" + std::string(1, s_[pos_]) + "'");
        return n;
    }

private:
    const std::string& s_;
    std::size_t pos_ = 0;

    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError(msg + " at position " + std::to_string(pos_) + " in \"" + s_ + "\"");
    }

    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool eat(char c) {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    NodePtr expr() {
        auto n = term();
        for (;;) {
            if (eat('+'))
                n = add(n, term());
            else if (eat('-'))
                n = sub(n, term());
            else
                return n;
        }
    }

    NodePtr term() {
        auto n = unary();
        for (;;) {
            if (eat('*'))
                n = mul(n, unary());
            else if (eat('/'))
                n = divide(n, unary());
            else
                return n;
        }
    }

    NodePtr unary() {
        if (eat('-')) return neg(unary());
        if (eat('+')) return unary();
        return power();
    }

    NodePtr power() {
        auto base = primary();
        if (eat('^')) {
            skip();
            bool negative = false;
            if (eat('-')) negative = true;
            skip();
            std::size_t start = pos_;
            while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
            if (start == pos_) fail("integer exponent expected");
            const int p = std::stoi(s_.substr(start, pos_ - start));
            return pow_node(base, negative ? -p : p);
        }
        return base;
    }

    NodePtr primary() {
        skip();
        if (pos_ >= s_.size()) fail("unexpected end of expression");
        const char c = s_[pos_];
        if (c == '(') {
            ++pos_;
            auto n = expr();
            if (!eat(')')) fail("')' expected");
            return n;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(s_.substr(pos_), &used);
            } catch (const std::exception&) {
                fail("malformed number");
            }
            pos_ += used;
            return make_const(v);
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            std::size_t start = pos_;
            while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
            const std::string id = s_.substr(start, pos_ - start);
            if (id == "z") return make(Kind::Var);
            if (id == "i") return make_const(kI);
            if (id == "pi") return make_const(std::numbers::pi);
            Kind k;
            if (id == "tanh")
                k = Kind::Tanh;
            else if (id == "sech")
                k = Kind::Sech;
            else if (id == "exp")
                k = Kind::Exp;
            else
                fail("unknown identifier '" + id + "'");
            if (!eat('(')) fail("'(' expected after " + id);
            auto arg = expr();
            if (!eat(')')) fail("')' expected");
            return make(k, arg);
        }
        fail("unexpected character '" + std::string(1, c) + "'");
    }
};

}  // namespace

Expression::Expression() : root_(make_const(0.0)) {}

Expression::Expression(std::shared_ptr<const Node> root) : root_(std::move(root)) {}

Expression Expression::parse(const std::string& text) { return Expression(Parser(text).parse()); }

Expression Expression::constant(Complex c) { return Expression(make_const(c)); }

Complex Expression::operator()(Complex z) const { return eval(*root_, z); }

Expression Expression::derivative() const { return Expression(derive(root_)); }

std::string Expression::to_string() const { return print(*root_); }

bool Expression::is_constant_zero() const { return is_const(root_, 0.0); }

}  // namespace nlevel
