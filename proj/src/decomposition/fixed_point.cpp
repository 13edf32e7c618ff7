#include "qfe/decomposition/fixed_point.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "qfe/bsde/terminal.hpp"
#include "qfe/core/errors.hpp"

namespace qfe {

std::vector<std::size_t> patch_boundaries(std::size_t steps, double horizon, double kappa, std::size_t patches) {
    if (steps == 0) {
        throw std::invalid_argument("patch_boundaries: empty grid");
    }
    if (patches == 0) {
        // Smallest P with horizon / P < 1 / (2 kappa).
        const double need = std::floor(2.0 * kappa * horizon) + 1.0;
        patches = need >= static_cast<double>(steps) ? steps : static_cast<std::size_t>(need);
    }
    if (patches > steps) {
        throw std::invalid_argument("patch_boundaries: more patches than grid steps");
    }
    std::vector<std::size_t> edges(patches + 1);
    for (std::size_t p = 0; p <= patches; ++p) {
        edges[p] = (p * steps + patches / 2) / patches;
    }
    edges.back() = steps;
    return edges;
}

Field patch_expectation(const ExpectationOperator& op, const Regressor& reg, std::size_t a, std::size_t b,
                        std::span<const double> values, std::span<const double> z) {
    const PathEnsemble& ens = reg.ensemble();
    const std::size_t M = ens.paths();
    const std::size_t d = ens.dim();
    if (a > b || b > ens.steps() || values.size() != M || (!z.empty() && z.size() != d)) {
        throw std::invalid_argument("patch_expectation: bad patch or buffer size");
    }
    const bool shifted = std::any_of(z.begin(), z.end(), [](double v) { return v != 0.0; });
    Field W(b - a + 1, M);
    std::copy(values.begin(), values.end(), W.row(b - a).begin());
    if (a == b) {
        return W;
    }
    if (op.stepwise()) {
        std::vector<double> shift;
        if (shifted) {
            shift.resize(M * d);
            for (std::size_t m = 0; m < M; ++m) {
                std::copy(z.begin(), z.end(), shift.begin() + static_cast<std::ptrdiff_t>(m * d));
            }
        }
        for (std::size_t i = b; i-- > a;) {
            op.step(reg, i, W.row(i + 1 - a), shift, W.row(i - a));
        }
        return W;
    }
    double bound = 0.0;
    for (double v : values) {
        bound = std::max(bound, std::abs(v));
    }
    TerminalCondition xi = bounded_terminal({values.begin(), values.end()}, bound, d);
    if (shifted) {
        xi.z.assign(z.begin(), z.end());
        xi.start.assign(M, a);
        xi.end.assign(M, b);
    }
    xi.known_from.assign(M, b);
    const Field V = op.evaluate_all(xi, reg);
    for (std::size_t i = a; i < b; ++i) {
        for (std::size_t m = 0; m < M; ++m) {
            W(i - a, m) = V(i, m) - (shifted ? xi.shift_value(ens, i, m) : 0.0);
        }
    }
    return W;
}

FixedPointSolution solve_fixed_point(const FixedPointProblem& problem, const Regressor& reg,
                                     const FixedPointOptions& opts) {
    const PathEnsemble& ens = reg.ensemble();
    const std::size_t M = ens.paths();
    const std::size_t N = ens.steps();
    const auto& grid = ens.grid();
    const double dt = grid.dt();
    if (!problem.op) {
        throw std::invalid_argument("solve_fixed_point: no operator");
    }
    if (!problem.driver.f || !(problem.driver.kappa >= 0.0)) {
        throw std::invalid_argument("solve_fixed_point: driver needs f and kappa >= 0");
    }
    if (problem.xi.size() != M) {
        throw std::invalid_argument("solve_fixed_point: terminal values do not match the ensemble");
    }
    if (!problem.source.empty() && (problem.source.rows() != N + 1 || problem.source.paths() != M)) {
        throw std::invalid_argument("solve_fixed_point: source must have N + 1 rows of M values");
    }
    if (!opts.start.empty() && (opts.start.rows() != N + 1 || opts.start.paths() != M)) {
        throw std::invalid_argument("solve_fixed_point: start must have N + 1 rows of M values");
    }

    FixedPointSolution sol;
    sol.boundaries = patch_boundaries(N, grid.horizon(), problem.driver.kappa, opts.patches);
    const std::size_t P = sol.boundaries.size() - 1;
    sol.residuals.resize(P);
    sol.Y = Field(N + 1, M);
    std::copy(problem.xi.begin(), problem.xi.end(), sol.Y.row(N).begin());

    auto q = [&](std::size_t i, std::size_t m, double y) {
        return problem.driver.f(grid.time(i), y) + (problem.source.empty() ? 0.0 : problem.source(i, m));
    };

    std::vector<double> G(M);
    Field F;
    for (std::size_t p = P; p-- > 0;) {
        const std::size_t a = sol.boundaries[p];
        const std::size_t b = sol.boundaries[p + 1];
        for (std::size_t i = a; i < b; ++i) {
            for (std::size_t m = 0; m < M; ++m) {
                sol.Y(i, m) = opts.initial ? *opts.initial : !opts.start.empty() ? opts.start(i, m) : sol.Y(b, m);
            }
        }
        auto& history = sol.residuals[p];
        for (std::size_t k = 0;; ++k) {
            // F_i = int_{t_a}^{t_i} q ds by the trapezoidal rule.
            F = Field(b - a + 1, M);
            for (std::size_t i = a; i < b; ++i) {
                for (std::size_t m = 0; m < M; ++m) {
                    F(i + 1 - a, m) = F(i - a, m) + 0.5 * dt * (q(i, m, sol.Y(i, m)) + q(i + 1, m, sol.Y(i + 1, m)));
                }
            }
            for (std::size_t m = 0; m < M; ++m) {
                G[m] = sol.Y(b, m) + F(b - a, m);
            }
            const Field W = patch_expectation(*problem.op, reg, a, b, G, problem.z);
            double residual = 0.0;
            for (std::size_t i = a; i < b; ++i) {
                for (std::size_t m = 0; m < M; ++m) {
                    const double next = W(i - a, m) - F(i - a, m);
                    residual = std::max(residual, std::abs(next - sol.Y(i, m)));
                    if (!std::isfinite(next)) {
                        residual = std::numeric_limits<double>::infinity();
                    }
                    sol.Y(i, m) = next;
                }
            }
            history.push_back(residual);
            ++sol.iterations;
            if (residual <= opts.tol) {
                break;
            }
            if (!std::isfinite(residual) || k + 1 >= opts.max_iter) {
                std::ostringstream os;
                os << "fixed point did not converge on patch [" << a << ", " << b << "] after " << (k + 1)
                   << " sweeps (residual " << residual << ")";
                throw NonConvergenceError(os.str(), residual);
            }
        }
    }
    return sol;
}

}  // namespace qfe
