#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "qfe/axioms/operator.hpp"
#include "qfe/core/field.hpp"
#include "qfe/core/regression.hpp"

namespace qfe {

// f(t, y), Lipschitz in y with constant kappa.
struct Driver {
    std::function<double(double, double)> f;
    double kappa = 0.0;
};

// Y_t + z.B_t + int_0^t (f(s, Y_s) + source_s) ds
//   = E[xi + z.B_T + int_0^T (f(s, Y_s) + source_s) ds | F_t].
struct FixedPointProblem {
    Driver driver;
    // Bounded terminal values, one per path.
    std::vector<double> xi;
    // Affine part; empty means zero.
    std::vector<double> z;
    // Optional per path-step term added to the driver (N + 1 rows).
    Field source;
    OperatorPtr op;
};

struct FixedPointOptions {
    // Stop once ||Phi(Y) - Y||_inf <= tol on the patch.
    double tol = 1e-10;
    std::size_t max_iter = 200;
    // Number of patches; 0 picks the fewest of width < 1/(2 kappa) the grid allows.
    std::size_t patches = 0;
    // Picard start: a constant, else `start` (N + 1 rows) when given, else the
    // patch's terminal values carried back.
    std::optional<double> initial;
    Field start;
};

struct FixedPointSolution {
    // N + 1 rows; excludes z.B.
    Field Y;
    // Patch edges in steps, ascending, from 0 to N.
    std::vector<std::size_t> boundaries;
    // Residual ||Phi(Y^k) - Y^k||_inf per Picard sweep, one list per patch
    // (patch p spans boundaries[p]..boundaries[p + 1]).
    std::vector<std::vector<double>> residuals;
    std::size_t iterations = 0;
};

std::vector<std::size_t> patch_boundaries(std::size_t steps, double horizon, double kappa, std::size_t patches);

// Picard iteration of Phi patch by patch, backward in time. Stepwise
// operators are advanced one step at a time; others are evaluated on a
// payoff frozen at the patch end. Throws NonConvergenceError with the last
// residual when max_iter is reached.
FixedPointSolution solve_fixed_point(const FixedPointProblem& problem, const Regressor& reg,
                                     const FixedPointOptions& opts = {});

// Per step i in [a, b]: E[values + z.(B_b - B_i) | F_{t_i}] for F_b-measurable values.
Field patch_expectation(const ExpectationOperator& op, const Regressor& reg, std::size_t a, std::size_t b,
                        std::span<const double> values, std::span<const double> z);

}  // namespace qfe
