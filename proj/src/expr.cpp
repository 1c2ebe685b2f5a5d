#include "adrctl/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <vector>

#include "adrctl/errors.hpp"

namespace adrctl {

struct Expression::Node {
    enum class Kind { Number, X, Y, Neg, Add, Sub, Mul, Div, Pow, Call } kind;
    double value = 0.0;
    double (*fn)(double) = nullptr;
    std::shared_ptr<const Node> lhs, rhs;

    double eval(double x, double y) const {
        switch (kind) {
            case Kind::Number: return value;
            case Kind::X: return x;
            case Kind::Y: return y;
            case Kind::Neg: return -lhs->eval(x, y);
            case Kind::Add: return lhs->eval(x, y) + rhs->eval(x, y);
            case Kind::Sub: return lhs->eval(x, y) - rhs->eval(x, y);
            case Kind::Mul: return lhs->eval(x, y) * rhs->eval(x, y);
            case Kind::Div: return lhs->eval(x, y) / rhs->eval(x, y);
            case Kind::Pow: return std::pow(lhs->eval(x, y), rhs->eval(x, y));
            case Kind::Call: return fn(lhs->eval(x, y));
        }
        return 0.0;
    }
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;
using Kind = Expression::Node::Kind;

NodePtr make(Kind k, NodePtr l = nullptr, NodePtr r = nullptr) {
    auto n = std::make_shared<Expression::Node>();
    n->kind = k;
    n->lhs = std::move(l);
    n->rhs = std::move(r);
    return n;
}

class Parser {
public:
    explicit Parser(const std::string& s) : s_(s) {}

    NodePtr parse_all() {
        NodePtr n = expr();
        skip();
        if (pos_ != s_.size()) fail("unexpected character");
        return n;
    }

private:
    const std::string& s_;
    std::size_t pos_ = 0;

    [[noreturn]] void fail(const std::string& why) const {
        throw ConfigError("cli", "expression '" + s_ + "': " + why + " at position " +
                                     std::to_string(pos_));
    }
    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    bool accept(char c) {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    NodePtr expr() {
        NodePtr n = term();
        for (;;) {
            if (accept('+')) n = make(Kind::Add, n, term());
            else if (accept('-')) n = make(Kind::Sub, n, term());
            else return n;
        }
    }
    NodePtr term() {
        NodePtr n = unary();
        for (;;) {
            if (accept('*')) n = make(Kind::Mul, n, unary());
            else if (accept('/')) n = make(Kind::Div, n, unary());
            else return n;
        }
    }
    NodePtr unary() {
        if (accept('-')) return make(Kind::Neg, unary());
        if (accept('+')) return unary();
        return power();
    }
    NodePtr power() {
        NodePtr base = atom();
        if (accept('^')) return make(Kind::Pow, base, unary());
        return base;
    }
    NodePtr atom() {
        skip();
        if (pos_ >= s_.size()) fail("unexpected end");
        if (accept('(')) {
            NodePtr n = expr();
            if (!accept(')')) fail("missing ')'");
            return n;
        }
        const char c = s_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            const char* begin = s_.c_str() + pos_;
            char* end = nullptr;
            const double v = std::strtod(begin, &end);
            if (end == begin) fail("bad number");
            pos_ += static_cast<std::size_t>(end - begin);
            auto n = std::make_shared<Expression::Node>();
            n->kind = Kind::Number;
            n->value = v;
            return n;
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            const std::size_t start = pos_;
            while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
            const std::string name = s_.substr(start, pos_ - start);
            if (name == "x") return make(Kind::X);
            if (name == "y") return make(Kind::Y);
            if (name == "pi") {
                auto n = std::make_shared<Expression::Node>();
                n->kind = Kind::Number;
                n->value = std::numbers::pi;
                return n;
            }
            double (*fn)(double) = nullptr;
            if (name == "sin") fn = [](double v) { return std::sin(v); };
            else if (name == "cos") fn = [](double v) { return std::cos(v); };
            else if (name == "tan") fn = [](double v) { return std::tan(v); };
            else if (name == "exp") fn = [](double v) { return std::exp(v); };
            else if (name == "log") fn = [](double v) { return std::log(v); };
            else if (name == "sqrt") fn = [](double v) { return std::sqrt(v); };
            else if (name == "abs") fn = [](double v) { return std::abs(v); };
            else if (name == "tanh") fn = [](double v) { return std::tanh(v); };
            else fail("unknown identifier '" + name + "'");
            if (!accept('(')) fail("expected '(' after " + name);
            auto n = std::make_shared<Expression::Node>();
            n->kind = Kind::Call;
            n->fn = fn;
            n->lhs = expr();
            if (!accept(')')) fail("missing ')'");
            return n;
        }
        fail("unexpected character");
    }
};

}  // namespace

Expression Expression::parse(const std::string& text) {
    Expression e;
    e.text_ = text;
    e.root_ = Parser(text).parse_all();
    return e;
}

double Expression::operator()(double x, double y) const { return root_->eval(x, y); }

}  // namespace adrctl
