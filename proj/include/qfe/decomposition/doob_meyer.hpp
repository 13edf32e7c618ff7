#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <vector>

#include "qfe/decomposition/fixed_point.hpp"
#include "qfe/generators/generator.hpp"

namespace qfe {

// y^n for the driver n (Y_t - y) and A^n_t = int_0^t n (y^n_s - Y_s) ds.
struct PenalizationRun {
    double n = 0.0;
    Field y;
    Field A;
    // sup over path-steps of |y^n - Y|.
    double sup_gap = 0.0;
    double mean_A_T = 0.0;
    std::size_t iterations = 0;
    std::size_t patches = 0;
};

// Y: N + 1 rows of bounded values; Y + z.B is taken to be an E-sub- or
// supermartingale.
PenalizationRun penalize(const Field& Y, std::vector<double> z, OperatorPtr op, double n, const Regressor& reg,
                         const FixedPointOptions& opts = {});

enum class Compensator { increasing, decreasing };

struct DecompositionOptions {
    std::vector<double> schedule{1, 2, 4, 8, 16, 32, 64};
    FixedPointOptions fixed_point{};
    // Steps where the martingale property of Y - A + z.B is probed; empty
    // means N/4, N/2 and 3N/4.
    std::vector<std::size_t> probe_steps;
    // Absolute slack in the y^n ordering test.
    double order_tolerance = 1e-9;
    // Unset: inferred from the sign of the last run's mean A_T.
    std::optional<Compensator> direction;
    std::size_t threads = 1;
};

struct DecompositionResult {
    std::vector<PenalizationRun> runs;
    // Extrapolated compensator before and after the pathwise isotonic projection.
    Field A_raw;
    Field A;
    double isotonic_adjustment = 0.0;
    Compensator direction = Compensator::increasing;
    // Drift and volatility of the martingale part Y - A + z.B.
    Field h;
    Field Z;
    // Largest RMS of E[X_T | F_t] - X_t over the probe steps, X = Y - A + z.B.
    double martingale_residual = 0.0;
    // Share of (level, path-step) checks where y^{n_k} and Y are ordered as
    // the penalization predicts.
    double order_fraction = 0.0;
};

// Penalization at each scheduled n, then the limit A by Richardson
// extrapolation in 1/n over the last two levels and an isotonic projection.
DecompositionResult doob_meyer_decompose(const Field& Y, std::vector<double> z, OperatorPtr op,
                                         const Regressor& reg, const DecompositionOptions& opts = {});

// Pathwise projection onto monotone sequences with A_0 = 0.
void isotonic_project(Field& A, Compensator direction);

// For martingale paths X (N + 1 rows): Z_i = E_i[(X_{i+1} - E_i X_{i+1}) dB_i] / dt
// and h_i = -(E_i X_{i+1} - X_i) / dt.
struct GeneratorEstimate {
    Field h;
    Field Z;
};
GeneratorEstimate extract_generator_pair(const Field& X, const Regressor& reg);

// Share of path-steps with g1(t, Z) - tol <= h <= g2(t, Z) + tol.
double sandwich_fraction(const GeneratorEstimate& est, const GeneratorPair& pair, const TimeGrid& grid,
                         double tol);

// One row per level: n, sup|y^n - Y|, mean A^n_T, martingale residual
// (blank except on the extrapolated row, n = "limit").
void write_decomposition_csv(std::ostream& out, const DecompositionResult& result);

}  // namespace qfe
