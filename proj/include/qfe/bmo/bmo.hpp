#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "qfe/bsde/solver.hpp"
#include "qfe/core/field.hpp"
#include "qfe/core/regression.hpp"
#include "qfe/core/stopping.hpp"

namespace qfe {

// Outcome of an empirical inequality lhs <= rhs.
struct InequalityReport {
    std::string check;
    bool pass = false;
    // False when the inequality's hypothesis fails; the inequality is then
    // not asserted and pass is left true.
    bool hypothesis_met = true;
    double lhs = 0.0;
    double rhs = 0.0;
    // max(lhs - rhs, 0)
    double violation = 0.0;
    double standard_error = 0.0;
    // Robust companion of an empirical-max lhs (99.9% quantile); equals lhs otherwise.
    double lhs_q999 = 0.0;
    // Share of path-steps failing, for pathwise checks.
    double fail_fraction = 0.0;
    std::string note;
};

std::string inequality_csv_header();
std::string to_csv_row(const InequalityReport& r);
void write_inequality_csv(std::ostream& out, const std::vector<InequalityReport>& reports);

struct BmoTerm {
    std::string label;
    // Empirical max over paths of E[<M>_T - <M>_tau | F_tau].
    double sup = 0.0;
    double q999 = 0.0;
};

// Lower-bound estimate of ||Z . B||^2_BMO over the family: all grid times plus
// the supplied hitting times.
struct BmoEstimate {
    double value = 0.0;
    double q999 = 0.0;
    std::vector<BmoTerm> terms;
};

// First exits of |B^1| from levels 0.5, 1, 1.5 and 2.
std::vector<StoppingTime> default_bmo_hitting(const PathEnsemble& ens);

// Z: N x M x d. <M>_t = sum |Z_i|^2 dt; conditional expectations are
// regressed at tau (on {tau = t_j} separately for random tau).
BmoEstimate bmo_norm(const Field& Z, const Regressor& reg, const std::vector<StoppingTime>& hitting = {});

// E[(int_0^T |Z|^2 dt)^n] <= n! ||Z||^{2n}_BMO, slack 3 SE of the left side.
InequalityReport check_energy_inequality(const Field& Z, const TimeGrid& grid, unsigned n, const BmoEstimate& bmo);

// {1 + x^-2 log[(1 - 2 alpha^-x)(2x - 1)/(2x - 2)]}^(1/2) - 1 for alpha > 2, x > 1.
// Throws std::domain_error outside.
double phi_alpha(double alpha, double x);
// Same with x = 1 + u, accurate for small u.
double phi_alpha_u(double alpha, double u);

struct HolderExponent {
    double q = 0.0;
    // q - 1, kept separately because q rounds to 1 for large J.
    double u = 0.0;
    // q / (q - 1)
    double p = 0.0;
    double residual = 0.0;
};

// Solves phi_alpha(q) = J by bisection in log(q - 1); phi_alpha decreases
// from +inf to 0 on (1, inf). Throws std::domain_error for J <= 0.
HolderExponent solve_p_for_bmo(double alpha, double J);

// E(gamma . B) on the grid: E_0 = 1, E_{i+1} = E_i exp(<gamma_i, dB_i> - |gamma_i|^2 dt / 2).
struct GirsanovKernel {
    Field gamma;
    Field exponential;
};
GirsanovKernel stochastic_exponential(Field gamma, const PathEnsemble& ens);

// E[E_T^p | F_t] <= alpha^p E_t^p at each grid time t < T, asserted only when
// ||gamma||_BMO <= phi_alpha(p). Left side: max over paths and times of the
// regressed ratio (E_T / E_t)^p.
InequalityReport check_reverse_holder(const GirsanovKernel& kernel, double p, double alpha, const Regressor& reg,
                                      const BmoEstimate& gamma_bmo);

// ||Z||^2_BMO <= (1 + T) exp(8 k ||Y||_inf).
InequalityReport bmo_bound_from_solution(const Field& Y, const Field& Z, double k, const Regressor& reg);
InequalityReport bmo_bound_from_solution(const BsdeSolution& sol, double k, const Regressor& reg);

}  // namespace qfe
