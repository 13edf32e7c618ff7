#include "qfe/core/stopping.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qfe {

StoppingTime StoppingTime::constant(std::size_t paths, std::size_t step) {
    return StoppingTime{Kind::deterministic, std::vector<std::size_t>(paths, step)};
}

StoppingTime StoppingTime::min(const StoppingTime& other) const {
    if (other.size() != size()) {
        throw std::invalid_argument("stopping time: size mismatch");
    }
    StoppingTime out;
    out.kind = (kind == Kind::deterministic && other.kind == Kind::deterministic)
                   ? Kind::deterministic
                   : Kind::first_hitting;
    out.index.resize(size());
    for (std::size_t m = 0; m < size(); ++m) {
        out.index[m] = std::min(index[m], other.index[m]);
    }
    return out;
}

StoppingTime first_hitting_time(const PathEnsemble& ensemble, std::size_t component, double level) {
    if (component >= ensemble.dim()) {
        throw std::invalid_argument("first_hitting_time: component out of range");
    }
    const std::size_t N = ensemble.steps();
    StoppingTime tau{StoppingTime::Kind::first_hitting,
                     std::vector<std::size_t>(ensemble.paths(), N)};
    for (std::size_t m = 0; m < ensemble.paths(); ++m) {
        for (std::size_t i = 0; i <= N; ++i) {
            if (std::abs(ensemble.value(i, m)[component]) >= level) {
                tau.index[m] = i;
                break;
            }
        }
    }
    return tau;
}

std::vector<bool> stopped_by(const StoppingTime& tau, std::size_t i) {
    std::vector<bool> out(tau.size());
    for (std::size_t m = 0; m < tau.size(); ++m) {
        out[m] = tau.index[m] <= i;
    }
    return out;
}

}  // namespace qfe
