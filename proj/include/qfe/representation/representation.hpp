#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "qfe/axioms/harness.hpp"
#include "qfe/axioms/operator.hpp"
#include "qfe/bmo/bmo.hpp"
#include "qfe/decomposition/doob_meyer.hpp"
#include "qfe/generators/checks.hpp"

namespace qfe {

// Y^z_t = l (|z| + |z|^2) t + z . B_t. A and h are filled by decompose_canonical.
struct CanonicalProcess {
    std::vector<double> z;
    double ell = 0.0;
    Field Y;
    // N + 1 rows.
    Field A;
    // N rows: dA/dt - l (|z| + |z|^2), the generator read off the compensator.
    Field h;

    double drift() const;
};

CanonicalProcess canonical_process(std::vector<double> z, double ell, const PathEnsemble& ens);

// Penalization decomposition of Y^z under op; fills A and h.
DecompositionResult decompose_canonical(CanonicalProcess& cp, OperatorPtr op, const Regressor& reg,
                                        const DecompositionOptions& opts = {});

struct RecoveryOptions {
    // Fractions of the horizon; each must be a whole number of steps.
    std::vector<double> h_fractions{1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0};
    // Use the smallest h directly instead of extrapolating. Unset: true for
    // g-expectations with a time-independent generator, false otherwise.
    std::optional<bool> time_homogeneous;
    // A cell is flagged when its quotients spread by more than this many SE.
    double spread_tolerance = 5.0;
    std::size_t threads = 1;
};

// Estimates of g(t, z) on a (time, z) grid, time-major.
struct RecoveredGenerator {
    std::vector<double> times;
    std::vector<Point> zs;
    std::vector<double> h_schedule;
    bool extrapolated = false;
    std::vector<double> value;
    std::vector<double> se;
    // Per cell, E[z . (B_{t+h} - B_t)] / h for each h in the schedule.
    std::vector<std::vector<double>> quotients;
    // max - min of the quotients.
    std::vector<double> spread;
    std::vector<bool> converged;

    std::size_t cells() const noexcept { return value.size(); }
    std::size_t index(std::size_t ti, std::size_t zi) const noexcept { return ti * zs.size() + zi; }
    double at(std::size_t ti, std::size_t zi) const { return value[index(ti, zi)]; }
    // Cells whose quotients did not settle (time inhomogeneity or (H6) failure).
    std::size_t unconverged() const;
};

// 9 points per axis on [-3, 3].
std::vector<Point> recovery_zgrid(std::size_t dim);
// 0, T/4, T/2, 3T/4.
std::vector<double> recovery_times(double horizon);

// g(t, z) from op[z . (B_{t+h} - B_t)] at t, averaged over paths, divided by h.
// Extrapolation is first order in h over the last two schedule entries.
// Throws std::invalid_argument when t + h leaves the grid or h is not a whole
// number of steps.
RecoveredGenerator recover_generator(const ExpectationOperator& op, const Regressor& reg,
                                     const std::vector<double>& times, const std::vector<Point>& zs,
                                     const RecoveryOptions& opts = {});

// (H6): op[z . (B_t - B_s)] at s, grouped into `bins` equal-count bins of
// B^1_s, must not depend on the bin. Pass when every pair of bin means
// agrees within 3 combined SE (plus a 1e-9 relative floor).
InequalityReport check_h6_independence(const ExpectationOperator& op, const Regressor& reg, std::size_t s_step,
                                       std::size_t t_step, std::vector<double> z, std::size_t bins = 4);

// (H4): E[z.B_T | F_t] - E[z'.B_T | F_t] <= (z - z').B_t + mu (1 + |z| + |z'|) |z - z'| (T - t)
// at every path-step, through the bootstrap harness.
InequalityReport check_h4_domination(const ExpectationOperator& op, const Regressor& reg, std::vector<double> z,
                                     std::vector<double> z_prime, double mu, const BootstrapOptions& opts = {});

struct MuFit {
    double mu = 0.0;
    // RMS of g - mu (1 + |z|) |z| over the fitted cells.
    double residual = 0.0;
    // RMS of the cell standard errors.
    double standard_error = 0.0;
    // |z| of the fitted cells.
    std::vector<double> z_norms;
    bool time_stable = true;
    // False when the residual exceeds 5 SE: the operator is not of canonical form.
    bool canonical = true;
    std::string note;
};

// Least squares over cells with |z| >= puncture. Throws std::invalid_argument
// when no cell remains.
MuFit fit_canonical_mu(const RecoveredGenerator& rec, double puncture = 0.05);

struct RecoveredLipschitz {
    InequalityReport report;
    // Violating pairs each cell takes part in.
    std::vector<std::size_t> cell_violations;
    // Cell with the most violations, when any.
    std::optional<std::size_t> worst_cell;
};

// |g(t, z) - g(t, z')| <= l (1 + |z| + |z'|) |z - z'| + 3 SE over all pairs at each time.
RecoveredLipschitz check_recovered_lipschitz(const RecoveredGenerator& rec, double ell);

// cos(B_T), tanh(B_T), 1{B_{T/2} > 0} tanh(B_T).
std::vector<Payoff> representation_payoffs();

// max over probes of max_m |op - E^g| / max_m |op| for each payoff; pass when
// every deviation is at most `tolerance`.
InequalityReport verify_representation(const ExpectationOperator& op, const Generator& g, const Regressor& reg,
                                       const std::vector<Payoff>& payoffs, const std::vector<std::size_t>& probes,
                                       double tolerance = 0.05);

// Columns: t,z1..zd,g,se,spread,converged,q_1..q_k.
void write_recovery_csv(std::ostream& out, const RecoveredGenerator& rec);
void write_mu_fit_csv(std::ostream& out, const MuFit& fit);

}  // namespace qfe
