#include "qfe/generators/expression.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace qfe {

struct Expression::Node {
    enum class Op {
        number, time, component, norm, neg, add, sub, mul, div, pow,
        lt, gt, le, ge, call
    };
    Op op = Op::number;
    double value = 0.0;
    std::size_t index = 0;
    std::string function;
    std::vector<std::shared_ptr<const Node>> args;
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;
using Op = Expression::Node::Op;

NodePtr make(Op op, std::vector<NodePtr> args = {}) {
    auto n = std::make_shared<Expression::Node>();
    n->op = op;
    n->args = std::move(args);
    return n;
}

class Parser {
public:
    Parser(const std::string& src, std::size_t dim) : src_(src), dim_(dim) {}

    NodePtr parse() {
        auto root = comparison();
        skip();
        if (pos_ != src_.size()) {
            fail("unexpected trailing input");
        }
        return root;
    }

private:
    [[noreturn]] void fail(const std::string& why) const {
        throw std::invalid_argument("expression '" + src_ + "': " + why + " at offset " +
                                    std::to_string(pos_));
    }

    void skip() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) {
            ++pos_;
        }
    }

    bool accept(const std::string& token) {
        skip();
        if (src_.compare(pos_, token.size(), token) == 0) {
            pos_ += token.size();
            return true;
        }
        return false;
    }

    NodePtr comparison() {
        auto lhs = additive();
        if (accept("<=")) return make(Op::le, {lhs, additive()});
        if (accept(">=")) return make(Op::ge, {lhs, additive()});
        if (accept("<")) return make(Op::lt, {lhs, additive()});
        if (accept(">")) return make(Op::gt, {lhs, additive()});
        return lhs;
    }

    NodePtr additive() {
        auto lhs = multiplicative();
        for (;;) {
            if (accept("+")) {
                lhs = make(Op::add, {lhs, multiplicative()});
            } else if (accept("-")) {
                lhs = make(Op::sub, {lhs, multiplicative()});
            } else {
                return lhs;
            }
        }
    }

    NodePtr multiplicative() {
        auto lhs = unary();
        for (;;) {
            if (accept("*")) {
                lhs = make(Op::mul, {lhs, unary()});
            } else if (accept("/")) {
                lhs = make(Op::div, {lhs, unary()});
            } else {
                return lhs;
            }
        }
    }

    NodePtr unary() {
        if (accept("-")) return make(Op::neg, {unary()});
        if (accept("+")) return unary();
        return power();
    }

    NodePtr power() {
        auto base = atom();
        if (accept("^")) {
            return make(Op::pow, {base, unary()});
        }
        return base;
    }

    NodePtr atom() {
        skip();
        if (pos_ >= src_.size()) {
            fail("unexpected end of input");
        }
        if (accept("(")) {
            auto inner = comparison();
            if (!accept(")")) fail("expected ')'");
            return inner;
        }
        const char c = src_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            std::size_t used = 0;
            const double v = std::stod(src_.substr(pos_), &used);
            pos_ += used;
            auto n = std::make_shared<Expression::Node>();
            n->op = Op::number;
            n->value = v;
            return n;
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            const std::size_t start = pos_;
            while (pos_ < src_.size() && std::isalnum(static_cast<unsigned char>(src_[pos_]))) {
                ++pos_;
            }
            const std::string ident = src_.substr(start, pos_ - start);
            if (accept("(")) {
                auto n = std::make_shared<Expression::Node>();
                n->op = Op::call;
                n->function = ident;
                if (!accept(")")) {
                    do {
                        n->args.push_back(comparison());
                    } while (accept(","));
                    if (!accept(")")) fail("expected ')' after arguments");
                }
                check_call(*n);
                return n;
            }
            return variable(ident);
        }
        fail(std::string("unexpected character '") + c + "'");
    }

    void check_call(const Expression::Node& n) const {
        static const std::vector<std::string> unary_fns{"abs", "sqrt", "exp", "log", "sin", "cos", "tanh"};
        const bool is_unary = std::find(unary_fns.begin(), unary_fns.end(), n.function) != unary_fns.end();
        const bool is_binary = n.function == "min" || n.function == "max";
        if (!is_unary && !is_binary) fail("unknown function '" + n.function + "'");
        if (is_unary && n.args.size() != 1) fail(n.function + " takes one argument");
        if (is_binary && n.args.size() != 2) fail(n.function + " takes two arguments");
    }

    NodePtr variable(const std::string& ident) {
        auto n = std::make_shared<Expression::Node>();
        if (ident == "t") {
            n->op = Op::time;
        } else if (ident == "absz") {
            n->op = Op::norm;
        } else if (ident == "z" && dim_ == 1) {
            n->op = Op::component;
            n->index = 0;
        } else if (ident.size() > 1 && ident[0] == 'z' &&
                   std::all_of(ident.begin() + 1, ident.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) {
            const std::size_t k = std::stoul(ident.substr(1));
            if (k == 0 || k > dim_) fail("component '" + ident + "' out of range");
            n->op = Op::component;
            n->index = k - 1;
        } else {
            fail("unknown variable '" + ident + "'");
        }
        return n;
    }

    const std::string& src_;
    std::size_t dim_;
    std::size_t pos_ = 0;
};

double eval(const Expression::Node& n, double t, std::span<const double> z) {
    auto arg = [&](std::size_t k) { return eval(*n.args[k], t, z); };
    switch (n.op) {
        case Op::number: return n.value;
        case Op::time: return t;
        case Op::component: return z[n.index];
        case Op::norm: {
            double s = 0.0;
            for (double v : z) s += v * v;
            return std::sqrt(s);
        }
        case Op::neg: return -arg(0);
        case Op::add: return arg(0) + arg(1);
        case Op::sub: return arg(0) - arg(1);
        case Op::mul: return arg(0) * arg(1);
        case Op::div: return arg(0) / arg(1);
        case Op::pow: return std::pow(arg(0), arg(1));
        case Op::lt: return arg(0) < arg(1) ? 1.0 : 0.0;
        case Op::gt: return arg(0) > arg(1) ? 1.0 : 0.0;
        case Op::le: return arg(0) <= arg(1) ? 1.0 : 0.0;
        case Op::ge: return arg(0) >= arg(1) ? 1.0 : 0.0;
        case Op::call: {
            const std::string& f = n.function;
            if (f == "abs") return std::abs(arg(0));
            if (f == "sqrt") return std::sqrt(arg(0));
            if (f == "exp") return std::exp(arg(0));
            if (f == "log") return std::log(arg(0));
            if (f == "sin") return std::sin(arg(0));
            if (f == "cos") return std::cos(arg(0));
            if (f == "tanh") return std::tanh(arg(0));
            if (f == "min") return std::min(arg(0), arg(1));
            return std::max(arg(0), arg(1));
        }
    }
    return 0.0;
}

}  // namespace

Expression::Expression(const std::string& source, std::size_t dim)
    : source_(source), dim_(dim), root_(Parser(source_, dim).parse()) {}

Expression::~Expression() = default;
Expression::Expression(const Expression&) = default;
Expression& Expression::operator=(const Expression&) = default;
Expression::Expression(Expression&&) noexcept = default;
Expression& Expression::operator=(Expression&&) noexcept = default;

double Expression::operator()(double t, std::span<const double> z) const {
    if (z.size() != dim_) {
        throw std::invalid_argument("expression: argument dimension mismatch");
    }
    return eval(*root_, t, z);
}

}  // namespace qfe
