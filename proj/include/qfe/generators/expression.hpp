#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>

namespace qfe {

// Compiled arithmetic expression over t, z1..zd (z aliases z1) and absz = |z|.
// Supports + - * / ^, comparisons (yielding 0 or 1), and the functions
// abs sqrt exp log sin cos tanh min max.
class Expression {
public:
    struct Node;

    Expression(const std::string& source, std::size_t dim);
    ~Expression();
    Expression(const Expression&);
    Expression& operator=(const Expression&);
    Expression(Expression&&) noexcept;
    Expression& operator=(Expression&&) noexcept;

    double operator()(double t, std::span<const double> z) const;

    const std::string& source() const noexcept { return source_; }

private:
    std::string source_;
    std::size_t dim_;
    std::shared_ptr<const Node> root_;
};

}  // namespace qfe
