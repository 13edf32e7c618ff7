#pragma once

#include <cstddef>
#include <vector>

namespace qfe {

// Uniform partition 0 = t_0 < ... < t_N = T.
class TimeGrid {
public:
    TimeGrid(double horizon, std::size_t steps);

    double horizon() const noexcept { return horizon_; }
    std::size_t steps() const noexcept { return steps_; }
    double dt() const noexcept { return horizon_ / static_cast<double>(steps_); }

    // t_N is returned as the horizon itself, not as N * dt.
    double time(std::size_t i) const;

    std::vector<double> points() const;

    // Grid index closest to t (ties resolved downward).
    std::size_t index_of(double t) const;

    bool operator==(const TimeGrid&) const = default;

private:
    double horizon_;
    std::size_t steps_;
};

TimeGrid make_grid(double horizon, std::size_t steps);

}  // namespace qfe
