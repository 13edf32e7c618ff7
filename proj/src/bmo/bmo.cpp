#include "qfe/bmo/bmo.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "qfe/core/statistics.hpp"

namespace qfe {

namespace {

std::string quoted(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        out += c;
        if (c == '"') {
            out += '"';
        }
    }
    return out + "\"";
}

// Cumulative <M>: N + 1 rows.
Field quadratic_variation(const Field& Z, double dt) {
    Field Q(Z.rows() + 1, Z.paths());
    for (std::size_t i = 0; i < Z.rows(); ++i) {
        for (std::size_t m = 0; m < Z.paths(); ++m) {
            double s = 0.0;
            for (double v : Z.at(i, m)) {
                s += v * v;
            }
            Q(i + 1, m) = Q(i, m) + s * dt;
        }
    }
    return Q;
}

BmoTerm summarize(std::string label, const std::vector<double>& values) {
    BmoTerm t{std::move(label), 0.0, 0.0};
    if (!values.empty()) {
        t.sup = *std::max_element(values.begin(), values.end());
        t.q999 = quantile(values, 0.999);
    }
    return t;
}

}  // namespace

std::string inequality_csv_header() {
    return "check,pass,hypothesis_met,lhs,rhs,violation,standard_error,lhs_q999,fail_fraction,note";
}

std::string to_csv_row(const InequalityReport& r) {
    std::ostringstream os;
    os << std::setprecision(10) << quoted(r.check) << ',' << (r.pass ? 1 : 0) << ',' << (r.hypothesis_met ? 1 : 0)
       << ',' << r.lhs << ',' << r.rhs << ',' << r.violation << ',' << r.standard_error << ',' << r.lhs_q999 << ','
       << r.fail_fraction << ',' << quoted(r.note);
    return os.str();
}

void write_inequality_csv(std::ostream& out, const std::vector<InequalityReport>& reports) {
    out << inequality_csv_header() << '\n';
    for (const auto& r : reports) {
        out << to_csv_row(r) << '\n';
    }
}

std::vector<StoppingTime> default_bmo_hitting(const PathEnsemble& ens) {
    std::vector<StoppingTime> out;
    for (double level : {0.5, 1.0, 1.5, 2.0}) {
        out.push_back(first_hitting_time(ens, 0, level));
    }
    return out;
}

BmoEstimate bmo_norm(const Field& Z, const Regressor& reg, const std::vector<StoppingTime>& hitting) {
    const PathEnsemble& ens = reg.ensemble();
    const std::size_t N = ens.steps();
    const std::size_t M = ens.paths();
    if (Z.rows() != N || Z.paths() != M || Z.width() != ens.dim()) {
        throw std::invalid_argument("bmo_norm: Z must be N x M x d");
    }
    const Field Q = quadratic_variation(Z, ens.grid().dt());
    BmoEstimate est;
    auto add = [&](BmoTerm t) {
        est.value = std::max(est.value, t.sup);
        est.q999 = std::max(est.q999, t.q999);
        est.terms.push_back(std::move(t));
    };
    std::vector<double> rest(M);
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t m = 0; m < M; ++m) {
            rest[m] = Q(N, m) - Q(i, m);
        }
        add(summarize("t_" + std::to_string(i), reg.full_projector(i)->apply(rest)));
    }
    for (std::size_t h = 0; h < hitting.size(); ++h) {
        const StoppingTime& tau = hitting[h];
        if (tau.size() != M) {
            throw std::invalid_argument("bmo_norm: stopping time size mismatch");
        }
        std::vector<double> cond;
        cond.reserve(M);
        std::vector<unsigned char> active(M);
        for (std::size_t j = 0; j < N; ++j) {
            std::size_t count = 0;
            for (std::size_t m = 0; m < M; ++m) {
                active[m] = tau[m] == j ? 1 : 0;
                count += active[m];
                rest[m] = Q(N, m) - Q(j, m);
            }
            if (count == 0) {
                continue;
            }
            ProjectionScope scope;
            scope.active = active;
            std::vector<double> fit(M, 0.0);
            reg.projector(j, scope).apply(rest, fit);
            for (std::size_t m = 0; m < M; ++m) {
                if (active[m] != 0) {
                    cond.push_back(fit[m]);
                }
            }
        }
        add(summarize("hitting_" + std::to_string(h), cond));
    }
    return est;
}

InequalityReport check_energy_inequality(const Field& Z, const TimeGrid& grid, unsigned n, const BmoEstimate& bmo) {
    if (n == 0) {
        throw std::invalid_argument("check_energy_inequality: n must be positive");
    }
    const Field Q = quadratic_variation(Z, grid.dt());
    auto total = Q.row(Q.rows() - 1);
    std::vector<double> powered(total.size());
    for (std::size_t m = 0; m < total.size(); ++m) {
        powered[m] = std::pow(total[m], static_cast<double>(n));
    }
    InequalityReport r;
    r.check = "energy inequality (n=" + std::to_string(n) + ")";
    r.lhs = mean(powered);
    r.lhs_q999 = r.lhs;
    r.standard_error = standard_error(powered);
    r.rhs = std::tgamma(static_cast<double>(n) + 1.0) * std::pow(bmo.value, static_cast<double>(n));
    r.violation = std::max(r.lhs - r.rhs, 0.0);
    r.pass = r.lhs <= r.rhs + 3.0 * r.standard_error + 1e-12 * r.rhs;
    return r;
}

double phi_alpha_u(double alpha, double u) {
    if (!(alpha > 2.0) || !(u > 0.0) || !std::isfinite(u)) {
        throw std::domain_error("phi_alpha: need alpha > 2 and x > 1");
    }
    const double x = 1.0 + u;
    // (1 - 2 alpha^-x) (2u + 1) / (2u)
    const double log_arg = std::log1p(-2.0 * std::pow(alpha, -x)) + std::log1p(2.0 * u) - std::log(2.0 * u);
    return std::sqrt(1.0 + log_arg / (x * x)) - 1.0;
}

double phi_alpha(double alpha, double x) {
    if (!(x > 1.0)) {
        throw std::domain_error("phi_alpha: need alpha > 2 and x > 1");
    }
    return phi_alpha_u(alpha, x - 1.0);
}

HolderExponent solve_p_for_bmo(double alpha, double J) {
    if (!(J > 0.0) || !std::isfinite(J)) {
        throw std::domain_error("solve_p_for_bmo: J must be positive");
    }
    // phi is decreasing in s = log(q - 1).
    double lo = std::log(1e-300);
    double hi = 0.0;
    while (phi_alpha_u(alpha, std::exp(hi)) > J) {
        hi += 4.0;
        if (hi > 700.0) {
            throw std::domain_error("solve_p_for_bmo: J below the range of phi");
        }
    }
    if (phi_alpha_u(alpha, std::exp(lo)) < J) {
        throw std::domain_error("solve_p_for_bmo: J above the range of phi");
    }
    for (int k = 0; k < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo)); ++k) {
        const double mid = 0.5 * (lo + hi);
        (phi_alpha_u(alpha, std::exp(mid)) > J ? lo : hi) = mid;
    }
    HolderExponent h;
    h.u = std::exp(0.5 * (lo + hi));
    h.q = 1.0 + h.u;
    h.p = (1.0 + h.u) / h.u;
    h.residual = std::abs(phi_alpha_u(alpha, h.u) - J);
    return h;
}

GirsanovKernel stochastic_exponential(Field gamma, const PathEnsemble& ens) {
    const std::size_t N = ens.steps();
    const std::size_t M = ens.paths();
    const std::size_t d = ens.dim();
    if (gamma.rows() != N || gamma.paths() != M || gamma.width() != d) {
        throw std::invalid_argument("stochastic_exponential: gamma must be N x M x d");
    }
    const double dt = ens.grid().dt();
    GirsanovKernel k{std::move(gamma), Field(N + 1, M)};
    for (std::size_t m = 0; m < M; ++m) {
        double log_e = 0.0;
        k.exponential(0, m) = 1.0;
        for (std::size_t i = 0; i < N; ++i) {
            auto g = k.gamma.at(i, m);
            auto dB = ens.increment(i, m);
            double dot = 0.0;
            double sq = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                dot += g[c] * dB[c];
                sq += g[c] * g[c];
            }
            log_e += dot - 0.5 * sq * dt;
            k.exponential(i + 1, m) = std::exp(log_e);
        }
    }
    return k;
}

InequalityReport check_reverse_holder(const GirsanovKernel& kernel, double p, double alpha, const Regressor& reg,
                                      const BmoEstimate& gamma_bmo) {
    const PathEnsemble& ens = reg.ensemble();
    const std::size_t N = ens.steps();
    const std::size_t M = ens.paths();
    if (kernel.exponential.rows() != N + 1 || kernel.exponential.paths() != M) {
        throw std::invalid_argument("check_reverse_holder: kernel does not match the ensemble");
    }
    InequalityReport r;
    std::ostringstream name;
    name << "reverse Holder (p=" << p << ", alpha=" << alpha << ")";
    r.check = name.str();
    r.rhs = std::pow(alpha, p);
    const double norm = std::sqrt(gamma_bmo.value);
    const double limit = phi_alpha(alpha, p);
    if (norm > limit) {
        r.hypothesis_met = false;
        r.pass = true;
        std::ostringstream note;
        note << "hypothesis not satisfied (||gamma||_BMO " << norm << " > phi " << limit
             << "); inequality not asserted";
        r.note = note.str();
        return r;
    }
    std::vector<double> ratio(M);
    std::vector<double> all;
    double rel_se = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t m = 0; m < M; ++m) {
            ratio[m] = std::pow(kernel.exponential(N, m) / kernel.exponential(i, m), p);
        }
        const auto fit = reg.full_projector(i)->apply(ratio);
        const double top = *std::max_element(fit.begin(), fit.end());
        if (top >= r.lhs) {
            r.lhs = top;
            const double mu = mean(ratio);
            rel_se = mu > 0.0 ? standard_error(ratio) / mu : 0.0;
        }
        all.insert(all.end(), fit.begin(), fit.end());
    }
    r.lhs_q999 = quantile(all, 0.999);
    r.standard_error = rel_se * r.lhs;
    r.violation = std::max(r.lhs - r.rhs, 0.0);
    r.pass = r.lhs <= r.rhs * (1.0 + 3.0 * rel_se);
    return r;
}

InequalityReport bmo_bound_from_solution(const Field& Y, const Field& Z, double k, const Regressor& reg) {
    const PathEnsemble& ens = reg.ensemble();
    if (Y.rows() != ens.steps() + 1 || Y.paths() != ens.paths()) {
        throw std::invalid_argument("bmo_bound_from_solution: Y does not match the ensemble");
    }
    const BmoEstimate bmo = bmo_norm(Z, reg, default_bmo_hitting(ens));
    double ysup = 0.0;
    for (double v : Y.data()) {
        ysup = std::max(ysup, std::abs(v));
    }
    InequalityReport r;
    r.check = "BMO bound of Z";
    r.lhs = bmo.value;
    r.lhs_q999 = bmo.q999;
    r.rhs = (1.0 + ens.grid().horizon()) * std::exp(8.0 * k * ysup);
    r.violation = std::max(r.lhs - r.rhs, 0.0);
    r.pass = r.lhs <= r.rhs;
    std::ostringstream note;
    note << "k=" << k << ", ||Y||_inf=" << ysup;
    r.note = note.str();
    return r;
}

InequalityReport bmo_bound_from_solution(const BsdeSolution& sol, double k, const Regressor& reg) {
    return bmo_bound_from_solution(sol.Y, sol.Z, k, reg);
}

}  // namespace qfe
