#include "qfe/bsde/terminal.hpp"

#include <algorithm>
#include <stdexcept>

namespace qfe {

namespace {

std::vector<double> clipped(std::vector<double> values, double bound) {
    if (!(bound >= 0.0)) {
        throw std::invalid_argument("terminal bound must be non-negative");
    }
    for (double& v : values) {
        v = std::clamp(v, -bound, bound);
    }
    return values;
}

}  // namespace

bool TerminalCondition::has_shift() const noexcept {
    return std::any_of(z.begin(), z.end(), [](double v) { return v != 0.0; });
}

double TerminalCondition::shift_value(const PathEnsemble& ens, std::size_t i, std::size_t m) const {
    if (!has_shift()) {
        return 0.0;
    }
    const std::size_t s = start[m];
    const std::size_t j = std::clamp(i, s, end[m]);
    if (j == s) {
        return 0.0;
    }
    const auto bj = ens.value(j, m);
    const auto bs = ens.value(s, m);
    double acc = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) {
        acc += z[k] * (bj[k] - bs[k]);
    }
    return acc;
}

std::vector<double> TerminalCondition::values(const PathEnsemble& ens) const {
    std::vector<double> out(base);
    for (std::size_t m = 0; m < out.size(); ++m) {
        out[m] += shift_value(ens, ens.steps(), m);
    }
    return out;
}

TerminalCondition TerminalCondition::with_base(std::vector<double> new_base, double new_bound) const {
    if (new_base.size() != base.size()) {
        throw std::invalid_argument("with_base: path count mismatch");
    }
    TerminalCondition out(*this);
    out.base = clipped(std::move(new_base), new_bound);
    out.bound = new_bound;
    return out;
}

void TerminalCondition::validate(const PathEnsemble& ens) const {
    const std::size_t M = ens.paths();
    const std::size_t N = ens.steps();
    if (base.size() != M) {
        throw std::invalid_argument("terminal condition: path count does not match ensemble");
    }
    if (z.size() != ens.dim()) {
        throw std::invalid_argument("terminal condition: shift dimension does not match ensemble");
    }
    if (start.size() != M || end.size() != M) {
        throw std::invalid_argument("terminal condition: window size mismatch");
    }
    for (std::size_t m = 0; m < M; ++m) {
        if (start[m] > end[m] || end[m] > N) {
            throw std::invalid_argument("terminal condition: invalid shift window");
        }
        if (std::abs(base[m]) > bound) {
            throw std::invalid_argument("terminal condition: base exceeds its bound");
        }
    }
    if (!known_from.empty()) {
        if (known_from.size() != M) {
            throw std::invalid_argument("terminal condition: known_from size mismatch");
        }
        for (std::size_t m = 0; m < M; ++m) {
            if (known_from[m] > N || (has_shift() && end[m] > known_from[m])) {
                throw std::invalid_argument("terminal condition: payoff known before its shift ends");
            }
        }
    }
    for (const auto& f : features) {
        if (f.values.size() != M || f.from_step > N) {
            throw std::invalid_argument("terminal condition: malformed feature");
        }
    }
}

TerminalCondition bounded_terminal(std::vector<double> values, double bound, std::size_t dim) {
    TerminalCondition xi;
    const std::size_t M = values.size();
    xi.base = clipped(std::move(values), bound);
    xi.bound = bound;
    xi.z.assign(dim, 0.0);
    xi.start.assign(M, 0);
    xi.end.assign(M, 0);
    return xi;
}

TerminalCondition functional_terminal(const PathEnsemble& ens,
                                      const std::function<double(std::span<const double>)>& phi,
                                      double bound) {
    std::vector<double> values(ens.paths());
    for (std::size_t m = 0; m < values.size(); ++m) {
        values[m] = phi(ens.value(ens.steps(), m));
    }
    return bounded_terminal(std::move(values), bound, ens.dim());
}

TerminalCondition constant_terminal(const PathEnsemble& ens, double c) {
    return bounded_terminal(std::vector<double>(ens.paths(), c), std::abs(c), ens.dim());
}

TerminalCondition affine_terminal(std::vector<double> base, double bound, std::vector<double> z,
                                  const StoppingTime& tau) {
    if (tau.size() != base.size()) {
        throw std::invalid_argument("affine terminal: stopping time size mismatch");
    }
    const std::size_t dim = z.size();
    TerminalCondition xi = bounded_terminal(std::move(base), bound, dim);
    xi.z = std::move(z);
    xi.end = tau.index;
    return xi;
}

TerminalCondition increment_terminal(const PathEnsemble& ens, std::vector<double> z,
                                     std::size_t start, std::size_t end) {
    if (start > end || end > ens.steps()) {
        throw std::invalid_argument("increment terminal: invalid window");
    }
    TerminalCondition xi = bounded_terminal(std::vector<double>(ens.paths(), 0.0), 0.0, ens.dim());
    xi.z = std::move(z);
    xi.start.assign(ens.paths(), start);
    xi.end.assign(ens.paths(), end);
    return xi;
}

}  // namespace qfe
