#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "qfe/core/ensemble.hpp"
#include "qfe/core/stopping.hpp"

namespace qfe {

// Terminal data xi = xi0 + z . (B_end - B_start), pathwise windows.
// xi0 is bounded by K and stored clipped; the affine part is carried
// separately so it never enters the clip.
struct TerminalCondition {
    // Regressor adjoined for steps >= from_step (F_{from_step}-measurable).
    struct Feature {
        std::size_t from_step = 0;
        std::vector<double> values;
    };

    std::vector<double> base;
    double bound = 0.0;
    std::vector<double> z;
    std::vector<std::size_t> start;
    std::vector<std::size_t> end;
    // Optional: step from which the whole payoff is F-measurable (it is then
    // frozen there). Empty means N on every path.
    std::vector<std::size_t> known_from;
    std::vector<Feature> features;

    std::size_t paths() const noexcept { return base.size(); }
    std::size_t dim() const noexcept { return z.size(); }
    bool has_shift() const noexcept;

    // z . (B_clamp(i) - B_start) on path m.
    double shift_value(const PathEnsemble& ens, std::size_t i, std::size_t m) const;
    // Whether the shift accrues over step i on path m (start <= i < end).
    bool shift_active(std::size_t i, std::size_t m) const {
        return start[m] <= i && i < end[m];
    }
    std::size_t known_step(std::size_t m, std::size_t steps) const {
        return known_from.empty() ? steps : known_from[m];
    }

    // xi0 + z . (B_end - B_start) per path.
    std::vector<double> values(const PathEnsemble& ens) const;

    // Same windows and shift with a new base, clipped to the new bound.
    TerminalCondition with_base(std::vector<double> new_base, double new_bound) const;

    // Throws std::invalid_argument on inconsistent shapes or windows.
    void validate(const PathEnsemble& ens) const;
};

// Values clipped to [-K, K].
TerminalCondition bounded_terminal(std::vector<double> values, double bound, std::size_t dim);

// phi(B_T) clipped to [-K, K].
TerminalCondition functional_terminal(const PathEnsemble& ens,
                                      const std::function<double(std::span<const double>)>& phi,
                                      double bound);

TerminalCondition constant_terminal(const PathEnsemble& ens, double c);

// xi0 + z . B_tau.
TerminalCondition affine_terminal(std::vector<double> base, double bound, std::vector<double> z,
                                  const StoppingTime& tau);

// z . (B_end - B_start) with deterministic steps; K = 0.
TerminalCondition increment_terminal(const PathEnsemble& ens, std::vector<double> z,
                                     std::size_t start, std::size_t end);

}  // namespace qfe
