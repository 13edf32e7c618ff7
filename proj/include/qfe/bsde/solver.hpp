#pragma once

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "qfe/bsde/terminal.hpp"
#include "qfe/core/field.hpp"
#include "qfe/core/grid.hpp"
#include "qfe/core/regression.hpp"
#include "qfe/generators/generator.hpp"

namespace qfe {

// Y has N + 1 rows, Z has N rows of width d.
struct BsdeSolution {
    TimeGrid grid;
    Field Y;
    Field Z;
    std::string generator;
    double z_max = 0.0;
    // Path-steps where the Z estimate was clipped.
    std::size_t clipped = 0;
    // Per step: RMS of Y[i+1] minus its projection (regression residual).
    std::vector<double> regression_rms;

    std::vector<double> y_row(std::size_t i) const;
};

// sqrt((1 + T) exp(8 k K)) * 5 with k = max(l, 1/2); +inf when it overflows.
double default_z_max(double horizon, double growth, double bound);

// Solves the shifted backward equation with driver g(t, Z~ + z 1{start <= i < end})
// on xi0 and reconstitutes Y = Y~ + z . (B_clamp(i) - B_start), Z = Z~ + z 1{...}.
// z_max <= 0 selects default_z_max. Throws DegenerateBasisError or
// DivergenceError (|Y~| above 10 (K + l(|z| + |z|^2) T)).
BsdeSolution solve_bsde(const TerminalCondition& xi, const Generator& gen, const Regressor& reg,
                        double z_max = 0.0);

// solve_bsde for xi0 + z . B_tau.
BsdeSolution solve_shifted(std::span<const double> xi0, double bound, std::span<const double> z,
                           const StoppingTime& tau, const Generator& gen, const Regressor& reg,
                           double z_max = 0.0);

// Row i of the solution.
std::vector<double> conditional_g_expectation(const TerminalCondition& xi, const Generator& gen,
                                              const Regressor& reg, std::size_t step,
                                              double z_max = 0.0);

// One backward step of the explicit scheme on the paths in scope:
//   Yhat = E_i[next], Z~ = clip(E_i[(next - Yhat) dB_i] / dt),
//   out = Yhat + g(t_i, Z~ + shift) dt.
// shift is either empty or d values per path (zero where inactive).
// z_out (optional, M * d) receives Z~. Returns the number of clipped paths.
struct StepOutput {
    std::size_t clipped = 0;
    double rms = 0.0;
};
StepOutput backward_step(const Generator& gen, const Regressor& reg, std::size_t i,
                         std::span<const double> next, std::span<const double> shift,
                         double z_max, std::span<double> out, std::span<double> z_out = {},
                         const ProjectionScope& scope = {});

// (1/gamma) log E[e^{gamma xi} | F_t] by a step-by-step multiplicative chain,
// with the affine part factored out exactly. Throws DegenerateBasisError
// when a fitted exponential is not positive.
struct ColeHopfResult {
    Field Y;
    // Standard error of Y_0 from the direct estimator over all paths.
    double y0_standard_error = 0.0;
};
ColeHopfResult cole_hopf_oracle(double gamma, const TerminalCondition& xi, const Regressor& reg);

// z . B_t + int_t^T g(s, z) ds (Simpson quadrature for time-dependent g).
double deterministic_gexp_affine(const Generator& gen, std::span<const double> z, double t,
                                 std::span<const double> b_t, double horizon);

// int_a^b g(s, z) ds.
double integrate_driver(const Generator& gen, std::span<const double> z, double a, double b);

// Per step: i, t_i, mean Y, std Y, mean |Z|, regression residual.
void write_solution_csv(std::ostream& out, const BsdeSolution& sol);
// Per path-step: i, m, t_i, Y, Z components.
void write_solution_paths_csv(std::ostream& out, const BsdeSolution& sol);

}  // namespace qfe
