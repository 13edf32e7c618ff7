#include "qfe/axioms/comparison.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qfe {

AxiomReport check_comparison(OperatorPtr op, const Payoff& xi, const Payoff& xi_prime, const Driver& driver,
                             const PathField& phi, const Regressor& reg, const BootstrapOptions& opts,
                             const FixedPointOptions& fixed_point) {
    if (!op) {
        throw std::invalid_argument("check_comparison: no operator");
    }
    {
        const PathEnsemble& ens = reg.ensemble();
        const auto a = xi(ens).values(ens);
        const auto b = xi_prime(ens).values(ens);
        for (std::size_t m = 0; m < a.size(); ++m) {
            if (a[m] > b[m]) {
                throw std::invalid_argument("check_comparison: terminal values are not ordered");
            }
        }
        if (phi) {
            const Field p = phi(ens);
            if (std::any_of(p.data().begin(), p.data().end(), [](double v) { return v < 0.0; })) {
                throw std::invalid_argument("check_comparison: phi must be non-negative");
            }
        }
    }
    auto fn = [&](const Regressor& r) {
        const PathEnsemble& ens = r.ensemble();
        auto problem_for = [&](const Payoff& p) {
            const TerminalCondition t = p(ens);
            if (t.has_shift()) {
                throw std::invalid_argument("check_comparison: terminal values must be bounded");
            }
            FixedPointProblem prob;
            prob.driver = driver;
            prob.xi = t.base;
            prob.op = op;
            return prob;
        };
        const FixedPointProblem lo = problem_for(xi);
        FixedPointProblem hi = problem_for(xi_prime);
        if (phi) {
            hi.source = phi(ens);
        }
        const Field y = solve_fixed_point(lo, r, fixed_point).Y;
        const Field yp = solve_fixed_point(hi, r, fixed_point).Y;
        Discrepancy out{Field(ens.steps() + 1, ens.paths()), 0.0};
        for (std::size_t k = 0; k < y.data().size(); ++k) {
            out.d.data()[k] = y.data()[k] - yp.data()[k];
            out.scale = std::max({out.scale, std::abs(y.data()[k]), std::abs(yp.data()[k])});
        }
        return out;
    };
    return assess("comparison", op->describe(), fn, reg, Sidedness::one_sided, opts);
}

}  // namespace qfe
