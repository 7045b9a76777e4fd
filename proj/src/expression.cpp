#include "hjbfem/expression.hpp"

#include <cctype>
#include <cmath>
#include <numbers>
#include <vector>

#include "hjbfem/errors.hpp"

namespace hjbfem {

struct Expression::Node {
    enum class Kind { number, x, y, add, sub, mul, div, pow, neg, call };
    Kind kind = Kind::number;
    double value = 0.0;
    std::string function;
    std::vector<std::shared_ptr<const Node>> args;

    double eval(double x, double y) const {
        switch (kind) {
        case Kind::number:
            return value;
        case Kind::x:
            return x;
        case Kind::y:
            return y;
        case Kind::add:
            return args[0]->eval(x, y) + args[1]->eval(x, y);
        case Kind::sub:
            return args[0]->eval(x, y) - args[1]->eval(x, y);
        case Kind::mul:
            return args[0]->eval(x, y) * args[1]->eval(x, y);
        case Kind::div:
            return args[0]->eval(x, y) / args[1]->eval(x, y);
        case Kind::pow:
            return std::pow(args[0]->eval(x, y), args[1]->eval(x, y));
        case Kind::neg:
            return -args[0]->eval(x, y);
        case Kind::call:
            return call(x, y);
        }
        return 0.0;
    }

    double call(double x, double y) const {
        const double a = args[0]->eval(x, y);
        if (function == "abs")
            return std::abs(a);
        if (function == "sqrt")
            return std::sqrt(a);
        if (function == "sin")
            return std::sin(a);
        if (function == "cos")
            return std::cos(a);
        if (function == "exp")
            return std::exp(a);
        double r = a;
        for (std::size_t i = 1; i < args.size(); ++i) {
            const double b = args[i]->eval(x, y);
            r = function == "min" ? std::min(r, b) : std::max(r, b);
        }
        return r;
    }

    bool depends_on_coordinates() const {
        if (kind == Kind::x || kind == Kind::y)
            return true;
        for (const auto &a : args)
            if (a->depends_on_coordinates())
                return true;
        return false;
    }
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;
using Kind = Expression::Node::Kind;

NodePtr make(Kind kind, std::vector<NodePtr> args = {}, double value = 0.0) {
    auto n = std::make_shared<Expression::Node>();
    n->kind = kind;
    n->value = value;
    n->args = std::move(args);
    return n;
}

class Parser {
public:
    explicit Parser(const std::string &text) : s_(text) {}

    NodePtr parse() {
        NodePtr root = expression();
        skip_space();
        if (pos_ != s_.size())
            fail("unexpected character");
        return root;
    }

private:
    [[noreturn]] void fail(const std::string &msg) const {
        throw ParseError("expression '" + s_ + "': " + msg + " at position " + std::to_string(pos_));
    }

    void skip_space() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_])))
            ++pos_;
    }

    bool accept(char c) {
        skip_space();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    NodePtr expression() {
        NodePtr lhs = term();
        for (;;) {
            if (accept('+'))
                lhs = make(Kind::add, {lhs, term()});
            else if (accept('-'))
                lhs = make(Kind::sub, {lhs, term()});
            else
                return lhs;
        }
    }

    NodePtr term() {
        NodePtr lhs = unary();
        for (;;) {
            if (accept('*'))
                lhs = make(Kind::mul, {lhs, unary()});
            else if (accept('/'))
                lhs = make(Kind::div, {lhs, unary()});
            else
                return lhs;
        }
    }

    NodePtr unary() {
        if (accept('-'))
            return make(Kind::neg, {unary()});
        if (accept('+'))
            return unary();
        return power();
    }

    NodePtr power() {
        NodePtr base = primary();
        if (accept('^'))
            return make(Kind::pow, {base, unary()});
        return base;
    }

    NodePtr primary() {
        skip_space();
        if (pos_ >= s_.size())
            fail("unexpected end of input");
        const char c = s_[pos_];
        if (c == '(') {
            ++pos_;
            NodePtr inner = expression();
            if (!accept(')'))
                fail("expected ')'");
            return inner;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.')
            return number();
        if (std::isalpha(static_cast<unsigned char>(c)))
            return identifier();
        fail("unexpected character");
    }

    NodePtr number() {
        const char *begin = s_.c_str() + pos_;
        char *end = nullptr;
        const double v = std::strtod(begin, &end);
        if (end == begin)
            fail("malformed number");
        pos_ += static_cast<std::size_t>(end - begin);
        return make(Kind::number, {}, v);
    }

    NodePtr identifier() {
        const std::size_t start = pos_;
        while (pos_ < s_.size() &&
               (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
            ++pos_;
        const std::string name = s_.substr(start, pos_ - start);
        if (name == "x")
            return make(Kind::x);
        if (name == "y")
            return make(Kind::y);
        if (name == "pi")
            return make(Kind::number, {}, std::numbers::pi);
        if (name == "e")
            return make(Kind::number, {}, std::numbers::e);

        const bool unary_fn = name == "abs" || name == "sqrt" || name == "sin" ||
                              name == "cos" || name == "exp";
        const bool nary_fn = name == "min" || name == "max";
        if (!unary_fn && !nary_fn) {
            pos_ = start;
            fail("unknown identifier '" + name + "'");
        }
        if (!accept('('))
            fail("expected '(' after " + name);
        std::vector<NodePtr> args{expression()};
        while (accept(','))
            args.push_back(expression());
        if (!accept(')'))
            fail("expected ')'");
        if (unary_fn && args.size() != 1)
            fail(name + " takes one argument");
        if (nary_fn && args.size() < 2)
            fail(name + " takes at least two arguments");
        auto n = std::make_shared<Expression::Node>();
        n->kind = Kind::call;
        n->function = name;
        n->args = std::move(args);
        return n;
    }

    const std::string &s_;
    std::size_t pos_ = 0;
};

} // namespace

Expression Expression::parse(const std::string &text) {
    Expression e;
    e.text_ = text;
    e.root_ = Parser(text).parse();
    return e;
}

double Expression::operator()(double x, double y) const { return root_->eval(x, y); }

bool Expression::is_constant() const { return !root_->depends_on_coordinates(); }

} // namespace hjbfem
