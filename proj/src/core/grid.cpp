#include "qfe/core/grid.hpp"

#include <cmath>
#include <stdexcept>

namespace qfe {

TimeGrid::TimeGrid(double horizon, std::size_t steps) : horizon_(horizon), steps_(steps) {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) {
        throw std::invalid_argument("time grid: horizon must be positive and finite");
    }
    if (steps == 0) {
        throw std::invalid_argument("time grid: at least one step required");
    }
}

double TimeGrid::time(std::size_t i) const {
    if (i > steps_) {
        throw std::out_of_range("time grid: index past the horizon");
    }
    if (i == steps_) {
        return horizon_;
    }
    return horizon_ * static_cast<double>(i) / static_cast<double>(steps_);
}

std::vector<double> TimeGrid::points() const {
    std::vector<double> out(steps_ + 1);
    for (std::size_t i = 0; i <= steps_; ++i) {
        out[i] = time(i);
    }
    return out;
}

std::size_t TimeGrid::index_of(double t) const {
    if (t <= 0.0) {
        return 0;
    }
    if (t >= horizon_) {
        return steps_;
    }
    const double x = t / dt();
    const auto lower = static_cast<std::size_t>(std::floor(x));
    return (x - static_cast<double>(lower) > 0.5) ? lower + 1 : lower;
}

TimeGrid make_grid(double horizon, std::size_t steps) { return TimeGrid(horizon, steps); }

}  // namespace qfe
