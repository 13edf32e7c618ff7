#pragma once

#include <cstddef>
#include <vector>

#include "qfe/core/ensemble.hpp"

namespace qfe {

// Grid-valued stopping time: index[m] in {0, ..., N}.
struct StoppingTime {
    enum class Kind { deterministic, first_hitting };

    Kind kind = Kind::deterministic;
    std::vector<std::size_t> index;

    static StoppingTime constant(std::size_t paths, std::size_t step);

    std::size_t operator[](std::size_t m) const { return index[m]; }
    std::size_t size() const noexcept { return index.size(); }

    // tau and sigma pathwise minimum.
    StoppingTime min(const StoppingTime& other) const;
};

// First index with |B^component| >= level, else N. level = +inf never hits.
StoppingTime first_hitting_time(const PathEnsemble& ensemble, std::size_t component, double level);

// Event {tau <= i} evaluated from B[0..i] only.
std::vector<bool> stopped_by(const StoppingTime& tau, std::size_t i);

}  // namespace qfe
