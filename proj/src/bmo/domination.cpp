#include "qfe/bmo/domination.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "qfe/bsde/solver.hpp"
#include "qfe/core/statistics.hpp"
#include "qfe/generators/checks.hpp"

namespace qfe {

namespace {

void check_size(const std::vector<double>& v, std::size_t M, const char* what) {
    if (v.size() != M) {
        throw std::invalid_argument(std::string(what) + ": payoff size does not match the ensemble");
    }
}

double sup_abs(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) {
        s = std::max(s, std::abs(x));
    }
    return s;
}

// (mean |x|^p)^(1/p) and its delta-method standard error.
// Scaled by max |x| so that very large p (p -> inf as J grows) neither
// overflows nor underflows; the value tends to max |x|.
std::pair<double, double> lp_norm(const std::vector<double>& x, double p) {
    const double top = sup_abs(x);
    if (!(top > 0.0)) {
        return {0.0, 0.0};
    }
    std::vector<double> powered(x.size());
    for (std::size_t m = 0; m < x.size(); ++m) {
        powered[m] = std::pow(std::abs(x[m]) / top, p);
    }
    const double mu = mean(powered);
    const double value = top * std::pow(mu, 1.0 / p);
    return {value, standard_error(powered) * value / (p * mu)};
}

}  // namespace

DominationConstants domination_constants(double K, double R, double ell, double J, double ell2) {
    if (!(K >= 0.0) || !(R >= 0.0) || !(ell >= 0.0) || !(ell2 >= 0.0)) {
        throw std::invalid_argument("domination_constants: bounds must be non-negative");
    }
    DominationConstants c;
    c.K = K;
    c.R = R;
    c.J = J;
    c.p = solve_p_for_bmo(3.0, J).p;
    c.C_R = 3.0 * ell * (1.0 + R * R);
    c.alpha = ell2 / 2.0;
    return c;
}

DominationReport check_lp_domination(const ExpectationOperator& op, const std::vector<double>& xi1,
                                     const StoppingTime& tau1, const std::vector<double>& xi2,
                                     const StoppingTime& tau2, std::vector<double> z, const DominationConstants& c,
                                     const Regressor& reg) {
    const PathEnsemble& ens = reg.ensemble();
    const std::size_t M = ens.paths();
    const std::size_t N = ens.steps();
    check_size(xi1, M, "check_lp_domination");
    check_size(xi2, M, "check_lp_domination");
    if (tau1.size() != M || tau2.size() != M || z.size() != ens.dim()) {
        throw std::invalid_argument("check_lp_domination: stopping time or z does not match the ensemble");
    }
    for (std::size_t m = 0; m < M; ++m) {
        if (tau2[m] > tau1[m]) {
            throw std::invalid_argument("check_lp_domination: need tau2 <= tau1");
        }
    }
    if (sup_abs(xi1) > c.K || sup_abs(xi2) > c.K || norm(z) > c.R) {
        throw std::invalid_argument("check_lp_domination: payoff above K or |z| above R");
    }
    auto build = [&](const std::vector<double>& xi, const StoppingTime& tau) {
        TerminalCondition x = affine_terminal(xi, c.K, z, tau);
        x.known_from = tau.index;
        return x;
    };
    const TerminalCondition x1 = build(xi1, tau1);
    const TerminalCondition x2 = build(xi2, tau2);
    const Field Y1 = op.evaluate_all(x1, reg);
    const Field Y2 = op.evaluate_all(x2, reg);

    std::vector<double> dxi(M);
    std::vector<double> dtau(M);
    for (std::size_t m = 0; m < M; ++m) {
        dxi[m] = xi1[m] - xi2[m];
        dtau[m] = ens.grid().time(tau1[m]) - ens.grid().time(tau2[m]);
    }
    DominationReport r;
    {
        std::ostringstream label;
        label << "Lp domination (p=" << std::setprecision(6) << c.p << ")";
        r.check = label.str();
    }
    r.rhs = 3.0 * lp_norm(dxi, c.p).first + c.C_R * lp_norm(dtau, c.p).first;
    r.pass = true;
    std::vector<double> diff(M);
    double worst_excess = -std::numeric_limits<double>::infinity();
    std::size_t failing = 0;
    for (std::size_t i = 0; i <= N; ++i) {
        for (std::size_t m = 0; m < M; ++m) {
            diff[m] = (Y1(i, m) - x1.shift_value(ens, i, m)) - (Y2(i, m) - x2.shift_value(ens, i, m));
        }
        const auto [value, se] = lp_norm(diff, c.p);
        if (!(value <= r.rhs + 3.0 * se)) {
            r.pass = false;
            ++failing;
        }
        if (value - r.rhs > worst_excess) {
            worst_excess = value - r.rhs;
            r.lhs = value;
            r.standard_error = se;
        }
    }
    r.lhs_q999 = r.lhs;
    r.violation = std::max(r.lhs - r.rhs, 0.0);
    r.fail_fraction = static_cast<double>(failing) / static_cast<double>(N + 1);
    std::ostringstream note;
    note << "K=" << c.K << ", R=" << c.R << ", C_R=" << c.C_R << "; lhs at the worst grid time";
    r.note = note.str();
    return r;
}

DominationReport check_linf_domination(const ExpectationOperator& op, const Payoff& xi1, const Payoff& xi2,
                                       const StoppingRule& tau, std::vector<double> z, const Regressor& reg,
                                       const BootstrapOptions& opts) {
    if (z.size() != reg.ensemble().dim()) {
        throw std::invalid_argument("check_linf_domination: z dimension mismatch");
    }
    double lhs = 0.0;
    double rhs = 0.0;
    std::vector<double> gaps;
    bool first = true;
    auto fn = [&](const Regressor& r) {
        const PathEnsemble& ens = r.ensemble();
        const TerminalCondition a = xi1(ens);
        const TerminalCondition b = xi2(ens);
        if (a.has_shift() || b.has_shift()) {
            throw std::invalid_argument("check_linf_domination: xi1 and xi2 must be bounded");
        }
        const StoppingTime t = tau(ens);
        const Field Y1 = op.evaluate_all(affine_terminal(a.base, a.bound, z, t), r);
        const Field Y2 = op.evaluate_all(affine_terminal(b.base, b.bound, z, t), r);
        double sup = 0.0;
        for (std::size_t m = 0; m < ens.paths(); ++m) {
            sup = std::max(sup, std::abs(a.base[m] - b.base[m]));
        }
        Discrepancy out{Field(Y1.rows(), Y1.paths()), std::max(sup, 1e-300)};
        for (std::size_t k = 0; k < Y1.data().size(); ++k) {
            const double g = std::abs(Y1.data()[k] - Y2.data()[k]);
            out.d.data()[k] = g - sup;
            if (first) {
                gaps.push_back(g);
            }
        }
        if (first) {
            lhs = *std::max_element(gaps.begin(), gaps.end());
            rhs = sup;
        }
        if (first) {
            first = false;
        }
        return out;
    };
    const AxiomReport a = assess("Linf domination", op.describe(), fn, reg, Sidedness::one_sided, opts);
    DominationReport r;
    r.check = "Linf domination";
    r.pass = a.pass;
    r.lhs = lhs;
    r.rhs = rhs;
    r.lhs_q999 = quantile(gaps, 0.999);
    r.violation = std::max(lhs - rhs, 0.0);
    r.standard_error = a.tolerance / 3.0;
    r.fail_fraction = a.fail_fraction;
    std::ostringstream note;
    note << "empirical maxima over path-steps; " << a.resamples << " resamples";
    if (!a.note.empty()) {
        note << "; " << a.note;
    }
    r.note = note.str();
    return r;
}

Field gradient_kernel(const Generator& gen, const Field& Z, const TimeGrid& grid) {
    Field gamma(Z.rows(), Z.paths(), Z.width());
    for (std::size_t i = 0; i < Z.rows(); ++i) {
        const double t = grid.time(i);
        for (std::size_t m = 0; m < Z.paths(); ++m) {
            const Point g = gradient(gen, t, Z.at(i, m));
            std::copy(g.begin(), g.end(), gamma.at(i, m).begin());
        }
    }
    return gamma;
}

DominationReport check_one_sided_domination(const ExpectationOperator& op, const Payoff& xi, const Payoff& eta,
                                            std::vector<double> z, const StoppingRule& tau,
                                            const DominationConstants& c, const Regressor& reg,
                                            const BootstrapOptions& opts, const KernelRule& gamma) {
    const auto* gexp = dynamic_cast<const GExpectation*>(&op);
    if (!gamma && gexp == nullptr) {
        throw std::invalid_argument("check_one_sided_domination: supply a kernel for operators other than g-expectations");
    }
    if (z.size() != reg.ensemble().dim() || !(c.alpha >= 0.0)) {
        throw std::invalid_argument("check_one_sided_domination: z dimension or alpha invalid");
    }
    std::size_t fallbacks = 0;
    double kernel_bmo = 0.0;
    bool first = true;
    auto fn = [&](const Regressor& r) {
        const PathEnsemble& ens = r.ensemble();
        const std::size_t N = ens.steps();
        const std::size_t M = ens.paths();
        const TerminalCondition x = xi(ens);
        const TerminalCondition e = eta(ens);
        if (x.has_shift() || e.has_shift()) {
            throw std::invalid_argument("check_one_sided_domination: xi and eta must be bounded");
        }
        const TerminalCondition x2 = affine_terminal(x.base, x.bound, z, tau(ens));
        std::vector<double> sum(M);
        for (std::size_t m = 0; m < M; ++m) {
            sum[m] = x.base[m] + e.base[m];
        }
        const TerminalCondition x1 = x2.with_base(std::move(sum), x.bound + e.bound);

        Field Y2;
        Field g;
        if (gamma) {
            Y2 = op.evaluate_all(x2, r);
            g = gamma(r);
        } else {
            BsdeSolution sol = solve_bsde(x2, gexp->generator(), r);
            g = gradient_kernel(gexp->generator(), sol.Z, ens.grid());
            Y2 = std::move(sol.Y);
        }
        const Field Y1 = op.evaluate_all(x1, r);
        if (first) {
            kernel_bmo = bmo_norm(g, r).value;
        }
        const GirsanovKernel k = stochastic_exponential(std::move(g), ens);

        // V_i = E^gamma[V_{i+1} | F_i] with one-step weights E_{i+1} / E_i,
        // normalized by their fitted mean; V_N = exp(2 alpha eta) (eta when alpha = 0).
        const double two_alpha = 2.0 * c.alpha;
        std::vector<double> v(M);
        for (std::size_t m = 0; m < M; ++m) {
            v[m] = two_alpha > 0.0 ? std::exp(two_alpha * e.base[m]) : e.base[m];
        }
        Discrepancy out{Field(N + 1, M), 0.0};
        std::vector<double> w(M);
        std::vector<double> vw(M);
        std::vector<double> num(M);
        std::vector<double> den(M);
        for (std::size_t i = N + 1; i-- > 0;) {
            if (i < N) {
                double sw = 0.0;
                double svw = 0.0;
                for (std::size_t m = 0; m < M; ++m) {
                    w[m] = k.exponential(i + 1, m) / k.exponential(i, m);
                    vw[m] = v[m] * w[m];
                    sw += w[m];
                    svw += vw[m];
                }
                const auto proj = r.full_projector(i);
                proj->apply(vw, num);
                proj->apply(w, den);
                for (std::size_t m = 0; m < M; ++m) {
                    if (!(den[m] > 0.0) || (two_alpha > 0.0 && !(num[m] > 0.0))) {
                        // Fall back to the pooled weighted mean.
                        num[m] = svw;
                        den[m] = sw;
                        if (first) {
                            ++fallbacks;
                        }
                    }
                    v[m] = num[m] / den[m];
                }
            }
            for (std::size_t m = 0; m < M; ++m) {
                const double lhs = Y1(i, m) - Y2(i, m);
                const double rhs = two_alpha > 0.0 ? std::log(v[m]) / two_alpha : v[m];
                out.d(i, m) = lhs - rhs;
                out.scale = std::max({out.scale, std::abs(lhs), std::abs(rhs)});
            }
        }
        if (first) {
            first = false;
        }
        return out;
    };
    const AxiomReport a = assess("one-sided domination", op.describe(), fn, reg, Sidedness::one_sided, opts);
    DominationReport r;
    r.check = "one-sided domination (alpha=" + std::to_string(c.alpha) + ")";
    r.pass = a.pass;
    r.lhs = a.max_discrepancy;
    r.lhs_q999 = a.max_discrepancy;
    r.rhs = 0.0;
    r.violation = a.worst_violation;
    r.standard_error = a.tolerance / 3.0;
    r.fail_fraction = a.fail_fraction;
    std::ostringstream note;
    note << "||gamma||^2_BMO estimate " << kernel_bmo;
    if (c.J > 0.0 && kernel_bmo > c.J) {
        note << " exceeds J=" << c.J << " (evaluated anyway)";
    }
    if (fallbacks > 0) {
        note << "; " << fallbacks << " path-steps used the pooled weighted mean";
    }
    r.note = note.str();
    return r;
}

DominationReport domination_failure_demo(double a, double b, const PathEnsemble& ens) {
    if (!(a >= 0.0) || !(b >= 0.0)) {
        throw std::invalid_argument("domination_failure_demo: a and b must be non-negative");
    }
    const std::size_t M = ens.paths();
    const std::size_t N = ens.steps();
    std::vector<double> exy(M);
    std::vector<double> ex(M);
    std::vector<double> ey(M);
    for (std::size_t m = 0; m < M; ++m) {
        const double t = std::tanh(ens.value(N, m)[0]);
        exy[m] = std::exp((a + b) * t);
        ex[m] = std::exp(a * t);
        ey[m] = std::exp(b * t);
    }
    const double m1 = mean(exy);
    const double m2 = mean(ex);
    const double m3 = mean(ey);
    // Delta method for log m1 - log m2 - log m3 with gradient (1/m1, -1/m2, -1/m3).
    double var = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
        const double l = (exy[m] - m1) / m1 - (ex[m] - m2) / m2 - (ey[m] - m3) / m3;
        var += l * l;
    }
    var /= static_cast<double>(M > 1 ? M - 1 : 1);
    DominationReport r;
    std::ostringstream name;
    name << "self-domination gap (a=" << a << ", b=" << b << ")";
    r.check = name.str();
    r.lhs = std::log(m1) - std::log(m2);
    r.rhs = std::log(m3);
    r.violation = std::max(r.lhs - r.rhs, 0.0);
    r.lhs_q999 = r.lhs;
    r.standard_error = std::sqrt(var / static_cast<double>(M));
    r.pass = r.lhs - r.rhs > 3.0 * r.standard_error;
    std::ostringstream note;
    note << "gap " << (r.lhs - r.rhs) << " = E^g(X+Y) - E^g(X) - E^g(Y) at t = 0";
    r.note = note.str();
    return r;
}

}  // namespace qfe
