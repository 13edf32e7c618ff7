#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "qfe/generators/generator.hpp"

namespace qfe {

using Point = std::vector<double>;

// Tensor grid on [-radius, radius]^d with `per_dim` points per axis.
std::vector<Point> tensor_grid(std::size_t dim, double radius, std::size_t per_dim);

// Default verification grid: |z| <= 10, 200 points per axis for d = 1
// (fewer per axis in higher dimension to keep the grid tractable).
std::vector<Point> default_zgrid(std::size_t dim);

// Central differences with step 1e-5 (1 + |z|).
Point gradient(const Generator& gen, double t, std::span<const double> z);
double second_derivative_bound(const Generator& gen, double t, std::span<const double> z);

struct H2Report {
    bool pass = false;
    // max |g| / (l(|z| + |z|^2)) over the grid (z = 0 requires g = 0).
    double worst_ratio = 0.0;
    // max |grad g| / (l(1 + |z|)).
    double worst_gradient_ratio = 0.0;
    Point worst_point;
    std::size_t points = 0;
};

// Throws std::domain_error on a non-finite evaluation.
H2Report check_h2(const Generator& gen, double ell, std::span<const Point> zgrid,
                  std::span<const double> times = {});

struct LipschitzReport {
    bool pass = false;
    // max |g(z) - g(z')| / (l (1 + |z| + |z'|) |z - z'|); pairs with z = z' count as 0.
    double worst_ratio = 0.0;
    std::size_t worst_pair = 0;
    std::size_t pairs = 0;
};

LipschitzReport check_local_lipschitz(const Generator& gen, double ell,
                                      std::span<const std::pair<Point, Point>> pairs, double t = 0.0);

// Random pairs in the ball |z| <= radius (fixed seed).
std::vector<std::pair<Point, Point>> sample_pairs(std::size_t dim, double radius, std::size_t count,
                                                  std::uint64_t seed);

// max |d^2 g / dz^2| over the grid. Diagnostic only; not used as a gate.
double second_derivative_probe(const Generator& gen, std::span<const Point> zgrid, double t = 0.0);

// g1 <= g2 on the grid, within `tol`.
bool check_sandwich(const GeneratorPair& pair, std::span<const Point> zgrid, double t = 0.0,
                    double tol = 0.0);

// g(t, z) == g(t, -z) on the grid.
bool is_even(const Generator& gen, std::span<const Point> zgrid, double t = 0.0, double tol = 1e-12);

// Applies check_h2 on the default grid and throws std::invalid_argument on failure.
void require_h2(const Generator& gen, std::size_t dim);

}  // namespace qfe
