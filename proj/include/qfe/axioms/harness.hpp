#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "qfe/axioms/operator.hpp"
#include "qfe/bsde/terminal.hpp"
#include "qfe/core/field.hpp"
#include "qfe/core/regression.hpp"
#include "qfe/core/stopping.hpp"

namespace qfe {

// Payoffs are rebuilt on every bootstrap resample, so they are functions of
// the ensemble rather than fixed arrays.
using Payoff = std::function<TerminalCondition(const PathEnsemble&)>;
// Per-path F_{t}-measurable values (events, translation terms, stopping times).
using PathValues = std::function<std::vector<double>(const PathEnsemble&)>;
using StoppingRule = std::function<StoppingTime(const PathEnsemble&)>;

// phi(B_T) clipped to [-K, K].
Payoff terminal_payoff(std::function<double(double)> phi, double bound);

struct BootstrapOptions {
    std::size_t resamples = 200;
    std::uint64_t seed = 20240611;
    std::size_t threads = 1;
    // Violation floor, relative to the magnitude of the compared values.
    double relative_floor = 1e-6;
    // Largest tolerated fraction of path-steps above threshold.
    double max_fail_fraction = 0.01;
};

struct AxiomReport {
    std::string check;
    std::string op;
    bool pass = false;
    // max over path-steps of (violation - threshold)^+.
    double worst_violation = 0.0;
    // max over path-steps of the raw violation.
    double max_discrepancy = 0.0;
    // Median threshold max(3 SE, floor) over path-steps.
    double tolerance = 0.0;
    double fail_fraction = 0.0;
    std::size_t path_steps = 0;
    std::size_t paths = 0;
    std::size_t resamples = 0;
    std::string note;
};

std::string axiom_csv_header();
std::string to_csv_row(const AxiomReport& r);
std::string summary(const AxiomReport& r);
void write_axiom_csv(std::ostream& out, const std::vector<AxiomReport>& reports);

// Signed discrepancies (rows x M) with the magnitude used for the floor.
struct Discrepancy {
    Field d;
    double scale = 1.0;
};
using DiscrepancyFn = std::function<Discrepancy(const Regressor&)>;

enum class Sidedness {
    // Violation |d|.
    two_sided,
    // Violation max(d, 0).
    one_sided,
};

// Evaluates fn on the sample and on bootstrap resamples of its paths. Each
// replicate value is attributed to the original path it copies, giving a per
// path-step standard error. A path-step fails when its violation exceeds
// max(3 SE, relative_floor * scale); the check passes when at most
// max_fail_fraction of path-steps fail. Deterministic for any thread count.
AxiomReport assess(std::string check, std::string op, const DiscrepancyFn& fn, const Regressor& reg,
                   Sidedness sides, const BootstrapOptions& opts);

// (A1): pairs (xi, eta) with xi >= eta pathwise. Violation (E[eta] - E[xi])^+.
AxiomReport check_monotonicity(const ExpectationOperator& op, const std::vector<std::pair<Payoff, Payoff>>& pairs,
                               const std::vector<std::size_t>& steps, const Regressor& reg,
                               const BootstrapOptions& opts = {});

// (A2): E[c] = c.
AxiomReport check_constant_preserving(const ExpectationOperator& op, const std::vector<double>& constants,
                                      const std::vector<std::size_t>& steps, const Regressor& reg,
                                      const BootstrapOptions& opts = {});

// (A3): E_s[E_t[xi]] = E_s[xi], the inner value materialized as a payoff at t.
AxiomReport check_time_consistency(const ExpectationOperator& op, const Payoff& xi, std::size_t s,
                                   std::size_t t, const Regressor& reg, const BootstrapOptions& opts = {});

// Threshold event {B^component_{t_step} > level}; level = -inf is the whole
// space, +inf the empty set.
struct ThresholdEvent {
    std::size_t step = 0;
    std::size_t component = 0;
    double level = 0.0;

    std::vector<double> indicator(const PathEnsemble& ens) const;
};

// (A4): E_t[1_A xi] = 1_A E_t[xi] at steps t..N for A in F_t. xi must be bounded.
AxiomReport check_zero_one_law(const ExpectationOperator& op, const Payoff& xi, const ThresholdEvent& event,
                               const Regressor& reg, const BootstrapOptions& opts = {});

// E[xi + eta | F_i] = E[xi | F_i] + eta at steps t..N, eta F_t-measurable and bounded.
AxiomReport check_translation_invariance(const ExpectationOperator& op, const Payoff& xi, const PathValues& eta,
                                         std::size_t t, const Regressor& reg, const BootstrapOptions& opts = {});

// With X_i = E[xi + z . B_T | F_i] - z . B_i, compares E[X_tau + z . B_tau | F_sigma]
// (evaluated per path at its own sigma) with X_{tau ^ sigma} + z . B_{tau ^ sigma}.
AxiomReport check_optional_sampling(const ExpectationOperator& op, const Payoff& xi, std::vector<double> z,
                                    const StoppingRule& tau, const StoppingRule& sigma, const Regressor& reg,
                                    const BootstrapOptions& opts = {});

// Paths paired (2k, 2k + 1) sharing increments before `step` and drawing
// independent ones after it.
PathEnsemble twin_ensemble(const PathEnsemble& ens, std::size_t step, std::uint64_t seed);

// Outputs at steps <= `step` must agree bit-for-bit between twins.
AxiomReport check_measurability(const ExpectationOperator& op, const Payoff& xi, std::size_t step,
                                const Regressor& reg);

// Default battery: (A1)-(A4), translation invariance and the measurability
// probe on bounded payoffs of B.
std::vector<AxiomReport> run_axiom_battery(const ExpectationOperator& op, const Regressor& reg,
                                           const BootstrapOptions& opts = {});

}  // namespace qfe
