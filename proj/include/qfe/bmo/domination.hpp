#pragma once

#include <functional>
#include <vector>

#include "qfe/axioms/harness.hpp"
#include "qfe/bmo/bmo.hpp"
#include "qfe/generators/generator.hpp"

namespace qfe {

struct DominationConstants {
    // Payoff bound and |z| bound.
    double K = 1.0;
    double R = 1.0;
    double p = 2.0;
    double C_R = 0.0;
    // BMO budget of the Girsanov kernel.
    double J = 0.0;
    double alpha = 0.0;
};

// p from phi_3(q) = J with p = q / (q - 1); C_R = 3 l (1 + R^2); alpha = l2 / 2
// for |d^2 g / dz^2| <= l2.
DominationConstants domination_constants(double K, double R, double ell, double J, double ell2);

using DominationReport = InequalityReport;

// || (E[xi1 + z.B_tau1 | F_t] - z.B_{t ^ tau1}) - (E[xi2 + z.B_tau2 | F_t] - z.B_{t ^ tau2}) ||_p
//   <= 3 ||xi1 - xi2||_p + C_R ||tau1 - tau2||_p
// at every grid t, with slack 3 SE of the left side. xi_i must be
// F_{tau_i}-measurable and tau2 <= tau1.
DominationReport check_lp_domination(const ExpectationOperator& op, const std::vector<double>& xi1,
                                     const StoppingTime& tau1, const std::vector<double>& xi2,
                                     const StoppingTime& tau2, std::vector<double> z, const DominationConstants& c,
                                     const Regressor& reg);

// |E[xi1 + z.B_tau | F_t] - E[xi2 + z.B_tau | F_t]| <= max |xi1 - xi2| at every
// path-step, the right side an empirical max. A path-step fails when it
// exceeds the right side by more than the bootstrap threshold; at most
// opts.max_fail_fraction may fail. Reported lhs is the empirical max.
DominationReport check_linf_domination(const ExpectationOperator& op, const Payoff& xi1, const Payoff& xi2,
                                       const StoppingRule& tau, std::vector<double> z, const Regressor& reg,
                                       const BootstrapOptions& opts = {});

// gamma_t = grad g(t, Z_t), N x M x d.
Field gradient_kernel(const Generator& gen, const Field& Z, const TimeGrid& grid);

// E[eta + xi + z.B_tau | F_t] - E[xi + z.B_tau | F_t] <= E^{g_alpha}_gamma[eta | F_t],
// g_alpha = alpha |z|^2, evaluated pathwise at every step. The right side is
// (1 / 2 alpha) log E^gamma[exp(2 alpha eta) | F_t], computed backward one
// step at a time with weights E(gamma . B)_{i+1} / E(gamma . B)_i normalized
// per regression fit.
// Without a kernel rule, op must be a g-expectation and gamma is taken as
// grad g at the Z of the xi + z.B_tau solve. The bootstrap standard error
// gives the per path-step slack; at most opts.max_fail_fraction may fail.
// Reported lhs is the largest excess of the left side over the right.
using KernelRule = std::function<Field(const Regressor&)>;
DominationReport check_one_sided_domination(const ExpectationOperator& op, const Payoff& xi, const Payoff& eta,
                                            std::vector<double> z, const StoppingRule& tau,
                                            const DominationConstants& c, const Regressor& reg,
                                            const BootstrapOptions& opts = {}, const KernelRule& gamma = {});

// For g = |z|^2 / 2, X = a tanh(B_T), Y = b tanh(B_T):
// gap = log E e^{X+Y} - log E e^X - log E e^Y at t = 0, with a delta-method SE.
// pass means the gap is positive at 3 SE.
DominationReport domination_failure_demo(double a, double b, const PathEnsemble& ens);

}  // namespace qfe
