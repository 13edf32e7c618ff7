#include "qfe/representation/representation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "qfe/bsde/solver.hpp"
#include "qfe/core/parallel.hpp"
#include "qfe/core/statistics.hpp"

namespace qfe {

namespace {

std::size_t whole_steps(double span, double dt, const char* what) {
    const double k = span / dt;
    const double r = std::round(k);
    if (!(r >= 0.0) || std::abs(k - r) > 1e-9 * std::max(1.0, r)) {
        throw std::invalid_argument(std::string(what) + ": not a whole number of steps");
    }
    return static_cast<std::size_t>(r);
}

std::string csv_quoted(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        out += c;
        if (c == '"') {
            out += '"';
        }
    }
    return out + "\"";
}

bool auto_homogeneous(const ExpectationOperator& op) {
    const auto* g = dynamic_cast<const GExpectation*>(&op);
    return g != nullptr && !g->generator().time_dependent();
}

}  // namespace

double CanonicalProcess::drift() const {
    const double n = norm(z);
    return ell * (n + n * n);
}

CanonicalProcess canonical_process(std::vector<double> z, double ell, const PathEnsemble& ens) {
    if (z.size() != ens.dim() || !(ell >= 0.0)) {
        throw std::invalid_argument("canonical_process: z dimension or l invalid");
    }
    CanonicalProcess cp;
    cp.z = std::move(z);
    cp.ell = ell;
    const std::size_t N = ens.steps();
    const std::size_t M = ens.paths();
    const double c = cp.drift();
    cp.Y = Field(N + 1, M);
    for (std::size_t i = 0; i <= N; ++i) {
        const double t = ens.grid().time(i);
        for (std::size_t m = 0; m < M; ++m) {
            auto b = ens.value(i, m);
            double zb = 0.0;
            for (std::size_t k = 0; k < cp.z.size(); ++k) {
                zb += cp.z[k] * b[k];
            }
            cp.Y(i, m) = c * t + zb;
        }
    }
    return cp;
}

DecompositionResult decompose_canonical(CanonicalProcess& cp, OperatorPtr op, const Regressor& reg,
                                        const DecompositionOptions& opts) {
    const PathEnsemble& ens = reg.ensemble();
    const std::size_t N = ens.steps();
    const std::size_t M = ens.paths();
    if (cp.Y.rows() != N + 1 || cp.Y.paths() != M) {
        throw std::invalid_argument("decompose_canonical: process does not match the ensemble");
    }
    const double c = cp.drift();
    Field drift(N + 1, M);
    for (std::size_t i = 0; i <= N; ++i) {
        const double t = ens.grid().time(i);
        for (std::size_t m = 0; m < M; ++m) {
            drift(i, m) = c * t;
        }
    }
    DecompositionResult res = doob_meyer_decompose(drift, cp.z, std::move(op), reg, opts);
    cp.A = res.A;
    cp.h = Field(N, M);
    const double dt = ens.grid().dt();
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t m = 0; m < M; ++m) {
            cp.h(i, m) = (cp.A(i + 1, m) - cp.A(i, m)) / dt - c;
        }
    }
    return res;
}

std::size_t RecoveredGenerator::unconverged() const {
    return static_cast<std::size_t>(std::count(converged.begin(), converged.end(), false));
}

std::vector<Point> recovery_zgrid(std::size_t dim) { return tensor_grid(dim, 3.0, 9); }

std::vector<double> recovery_times(double horizon) {
    return {0.0, 0.25 * horizon, 0.5 * horizon, 0.75 * horizon};
}

RecoveredGenerator recover_generator(const ExpectationOperator& op, const Regressor& reg,
                                     const std::vector<double>& times, const std::vector<Point>& zs,
                                     const RecoveryOptions& opts) {
    const PathEnsemble& ens = reg.ensemble();
    const double dt = ens.grid().dt();
    const std::size_t N = ens.steps();
    if (opts.h_fractions.empty() || times.empty() || zs.empty()) {
        throw std::invalid_argument("recover_generator: empty schedule or grid");
    }
    RecoveredGenerator rec;
    rec.times = times;
    rec.zs = zs;
    std::vector<std::size_t> h_steps;
    for (double f : opts.h_fractions) {
        const double h = f * ens.grid().horizon();
        const std::size_t k = whole_steps(h, dt, "recover_generator: h");
        if (k == 0) {
            throw std::invalid_argument("recover_generator: h below one step");
        }
        if (!h_steps.empty() && k >= h_steps.back()) {
            throw std::invalid_argument("recover_generator: h schedule must decrease");
        }
        h_steps.push_back(k);
        rec.h_schedule.push_back(static_cast<double>(k) * dt);
    }
    std::vector<std::size_t> t_steps;
    for (double t : times) {
        const std::size_t i = whole_steps(t, dt, "recover_generator: t");
        if (i + h_steps.front() > N) {
            throw std::invalid_argument("recover_generator: t + h past the horizon");
        }
        t_steps.push_back(i);
    }
    for (const Point& z : zs) {
        if (z.size() != ens.dim()) {
            throw std::invalid_argument("recover_generator: z dimension mismatch");
        }
    }
    const bool homogeneous = opts.time_homogeneous.value_or(auto_homogeneous(op));
    rec.extrapolated = !homogeneous && h_steps.size() >= 2;

    const std::size_t cells = times.size() * zs.size();
    const std::size_t H = h_steps.size();
    rec.value.assign(cells, 0.0);
    rec.se.assign(cells, 0.0);
    rec.spread.assign(cells, 0.0);
    rec.converged.assign(cells, true);
    rec.quotients.assign(cells, std::vector<double>(H, 0.0));
    std::vector<std::vector<double>> q_se(cells, std::vector<double>(H, 0.0));

    parallel_for(cells * H, opts.threads, [&](std::size_t job) {
        const std::size_t cell = job / H;
        const std::size_t k = job % H;
        const std::size_t i = t_steps[cell / zs.size()];
        const Point& z = zs[cell % zs.size()];
        const TerminalCondition xi = increment_terminal(ens, z, i, i + h_steps[k]);
        const std::vector<double> v = op.evaluate_at(xi, reg, i);
        const double h = rec.h_schedule[k];
        rec.quotients[cell][k] = mean(v) / h;
        q_se[cell][k] = standard_error(v) / h;
    });

    for (std::size_t cell = 0; cell < cells; ++cell) {
        const auto& q = rec.quotients[cell];
        const auto& s = q_se[cell];
        if (rec.extrapolated) {
            const double hp = rec.h_schedule[H - 2];
            const double hl = rec.h_schedule[H - 1];
            rec.value[cell] = (hp * q[H - 1] - hl * q[H - 2]) / (hp - hl);
            rec.se[cell] = std::hypot(hp * s[H - 1], hl * s[H - 2]) / (hp - hl);
        } else {
            rec.value[cell] = q[H - 1];
            rec.se[cell] = s[H - 1];
        }
        const auto [lo, hi] = std::minmax_element(q.begin(), q.end());
        rec.spread[cell] = *hi - *lo;
        const double se_max = *std::max_element(s.begin(), s.end());
        rec.converged[cell] =
            rec.spread[cell] <= opts.spread_tolerance * se_max + 1e-9 * std::max(1.0, std::abs(rec.value[cell]));
    }
    return rec;
}

InequalityReport check_h6_independence(const ExpectationOperator& op, const Regressor& reg, std::size_t s_step,
                                       std::size_t t_step, std::vector<double> z, std::size_t bins) {
    const PathEnsemble& ens = reg.ensemble();
    const std::size_t M = ens.paths();
    if (!(s_step < t_step) || t_step > ens.steps() || z.size() != ens.dim() || bins < 2 || bins > M) {
        throw std::invalid_argument("check_h6_independence: need s < t <= N, matching z and 2 <= bins <= M");
    }
    const std::vector<double> v = op.evaluate_at(increment_terminal(ens, z, s_step, t_step), reg, s_step);
    std::vector<std::size_t> order(M);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return ens.value(s_step, a)[0] < ens.value(s_step, b)[0]; });
    std::vector<double> means(bins);
    std::vector<double> ses(bins);
    double scale = 0.0;
    for (std::size_t b = 0; b < bins; ++b) {
        std::vector<double> group;
        for (std::size_t k = b * M / bins; k < (b + 1) * M / bins; ++k) {
            group.push_back(v[order[k]]);
        }
        means[b] = mean(group);
        ses[b] = standard_error(group);
        scale = std::max(scale, std::abs(means[b]));
    }
    InequalityReport r;
    r.check = "H6 independence";
    r.pass = true;
    std::size_t pairs = 0;
    std::size_t failing = 0;
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < bins; ++a) {
        for (std::size_t b = a + 1; b < bins; ++b) {
            const double gap = std::abs(means[a] - means[b]);
            const double se = std::hypot(ses[a], ses[b]);
            const double thr = 3.0 * se + 1e-9 * std::max(scale, 1.0);
            ++pairs;
            if (gap > thr) {
                ++failing;
                r.pass = false;
            }
            if (gap - thr > worst) {
                worst = gap - thr;
                r.lhs = gap;
                r.rhs = thr;
                r.standard_error = se;
            }
        }
    }
    r.lhs_q999 = r.lhs;
    r.violation = std::max(r.lhs - r.rhs, 0.0);
    r.fail_fraction = static_cast<double>(failing) / static_cast<double>(pairs);
    std::ostringstream note;
    note << std::setprecision(6) << "bin means of B_s-ordered groups:";
    for (double m : means) {
        note << ' ' << m;
    }
    r.note = note.str();
    return r;
}

InequalityReport check_h4_domination(const ExpectationOperator& op, const Regressor& reg, std::vector<double> z,
                                     std::vector<double> z_prime, double mu, const BootstrapOptions& opts) {
    const std::size_t d = reg.ensemble().dim();
    if (z.size() != d || z_prime.size() != d || !(mu >= 0.0)) {
        throw std::invalid_argument("check_h4_domination: z dimension or mu invalid");
    }
    std::vector<double> dz(d);
    for (std::size_t k = 0; k < d; ++k) {
        dz[k] = z[k] - z_prime[k];
    }
    const double rate = mu * (1.0 + norm(z) + norm(z_prime)) * norm(dz);
    auto fn = [&](const Regressor& r) {
        const PathEnsemble& ens = r.ensemble();
        const std::size_t N = ens.steps();
        const std::size_t M = ens.paths();
        const double T = ens.grid().horizon();
        const Field Y = op.evaluate_all(increment_terminal(ens, z, 0, N), r);
        const Field Yp = op.evaluate_all(increment_terminal(ens, z_prime, 0, N), r);
        Discrepancy out{Field(N + 1, M), 0.0};
        for (std::size_t i = 0; i <= N; ++i) {
            const double tail = rate * (T - ens.grid().time(i));
            for (std::size_t m = 0; m < M; ++m) {
                auto b = ens.value(i, m);
                double lin = 0.0;
                for (std::size_t k = 0; k < d; ++k) {
                    lin += dz[k] * b[k];
                }
                const double lhs = Y(i, m) - Yp(i, m);
                const double rhs = lin + tail;
                out.d(i, m) = lhs - rhs;
                out.scale = std::max({out.scale, std::abs(lhs), std::abs(rhs)});
            }
        }
        return out;
    };
    const AxiomReport a = assess("H4 domination", op.describe(), fn, reg, Sidedness::one_sided, opts);
    InequalityReport r;
    std::ostringstream name;
    name << "H4 domination (mu=" << mu << ")";
    r.check = name.str();
    r.pass = a.pass;
    r.lhs = a.max_discrepancy;
    r.lhs_q999 = a.max_discrepancy;
    r.rhs = 0.0;
    r.violation = a.worst_violation;
    r.standard_error = a.tolerance / 3.0;
    r.fail_fraction = a.fail_fraction;
    r.note = "lhs is the largest excess of the left side over the closed-form right side";
    if (!a.note.empty()) {
        r.note += "; " + a.note;
    }
    return r;
}

MuFit fit_canonical_mu(const RecoveredGenerator& rec, double puncture) {
    MuFit fit;
    double num = 0.0;
    double den = 0.0;
    double scale = 0.0;
    std::vector<std::pair<double, double>> cells;
    double se_sq = 0.0;
    for (std::size_t ti = 0; ti < rec.times.size(); ++ti) {
        for (std::size_t zi = 0; zi < rec.zs.size(); ++zi) {
            const double n = norm(rec.zs[zi]);
            if (n < puncture) {
                continue;
            }
            const double w = (1.0 + n) * n;
            const double g = rec.at(ti, zi);
            num += g * w;
            den += w * w;
            cells.emplace_back(w, g);
            fit.z_norms.push_back(n);
            se_sq += rec.se[rec.index(ti, zi)] * rec.se[rec.index(ti, zi)];
            scale = std::max(scale, std::abs(g));
        }
    }
    if (cells.empty()) {
        throw std::invalid_argument("fit_canonical_mu: no z outside the punctured ball");
    }
    fit.mu = num / den;
    double sq = 0.0;
    for (const auto& [w, g] : cells) {
        sq += (g - fit.mu * w) * (g - fit.mu * w);
    }
    fit.residual = std::sqrt(sq / static_cast<double>(cells.size()));
    fit.standard_error = std::sqrt(se_sq / static_cast<double>(cells.size()));
    const double floor = 1e-9 * std::max(scale, 1.0);

    for (std::size_t zi = 0; zi < rec.zs.size() && fit.time_stable; ++zi) {
        double lo = rec.at(0, zi);
        double hi = lo;
        double se = 0.0;
        for (std::size_t ti = 0; ti < rec.times.size(); ++ti) {
            lo = std::min(lo, rec.at(ti, zi));
            hi = std::max(hi, rec.at(ti, zi));
            se = std::max(se, rec.se[rec.index(ti, zi)]);
        }
        fit.time_stable = hi - lo <= 3.0 * se + floor;
    }
    fit.canonical = fit.time_stable && fit.residual <= 5.0 * fit.standard_error + floor;
    std::ostringstream note;
    if (!fit.time_stable) {
        note << "recovered generator varies in time; ";
    }
    if (fit.canonical) {
        note << "canonical form mu (1 + |z|) |z| fits within 5 SE";
    } else {
        note << "operator is quadratic but not of canonical form (residual " << fit.residual << ", SE "
             << fit.standard_error << ")";
    }
    fit.note = note.str();
    return fit;
}

RecoveredLipschitz check_recovered_lipschitz(const RecoveredGenerator& rec, double ell) {
    RecoveredLipschitz out;
    out.cell_violations.assign(rec.cells(), 0);
    InequalityReport& r = out.report;
    std::ostringstream name;
    name << "recovered local Lipschitz (l=" << ell << ")";
    r.check = name.str();
    r.pass = true;
    std::size_t pairs = 0;
    std::size_t failing = 0;
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t ti = 0; ti < rec.times.size(); ++ti) {
        for (std::size_t a = 0; a < rec.zs.size(); ++a) {
            for (std::size_t b = a + 1; b < rec.zs.size(); ++b) {
                const std::size_t ca = rec.index(ti, a);
                const std::size_t cb = rec.index(ti, b);
                Point dz(rec.zs[a].size());
                for (std::size_t k = 0; k < dz.size(); ++k) {
                    dz[k] = rec.zs[a][k] - rec.zs[b][k];
                }
                const double lhs = std::abs(rec.value[ca] - rec.value[cb]);
                const double se = std::hypot(rec.se[ca], rec.se[cb]);
                const double bound = ell * (1.0 + norm(rec.zs[a]) + norm(rec.zs[b])) * norm(dz);
                const double thr = bound + 3.0 * se + 1e-12 * std::max(1.0, lhs);
                ++pairs;
                if (lhs > thr) {
                    ++failing;
                    ++out.cell_violations[ca];
                    ++out.cell_violations[cb];
                    r.pass = false;
                }
                if (lhs - thr > worst) {
                    worst = lhs - thr;
                    r.lhs = lhs;
                    r.rhs = bound;
                    r.standard_error = se;
                }
            }
        }
    }
    r.lhs_q999 = r.lhs;
    r.violation = std::max(r.lhs - r.rhs - 3.0 * r.standard_error, 0.0);
    r.fail_fraction = pairs == 0 ? 0.0 : static_cast<double>(failing) / static_cast<double>(pairs);
    std::ostringstream note;
    if (pairs == 0) {
        note << "single z per time: vacuous";
    } else if (failing > 0) {
        const auto it = std::max_element(out.cell_violations.begin(), out.cell_violations.end());
        out.worst_cell = static_cast<std::size_t>(it - out.cell_violations.begin());
        const std::size_t ti = *out.worst_cell / rec.zs.size();
        const std::size_t zi = *out.worst_cell % rec.zs.size();
        note << "most violations at t=" << rec.times[ti] << ", z=(";
        for (std::size_t k = 0; k < rec.zs[zi].size(); ++k) {
            note << (k ? "," : "") << rec.zs[zi][k];
        }
        note << ") in " << *it << " of " << failing << " failing pairs";
    }
    r.note = note.str();
    return out;
}

std::vector<Payoff> representation_payoffs() {
    return {
        terminal_payoff([](double b) { return std::cos(b); }, 1.0),
        terminal_payoff([](double b) { return std::tanh(b); }, 1.0),
        [](const PathEnsemble& ens) {
            const std::size_t N = ens.steps();
            const std::size_t M = ens.paths();
            std::vector<double> values(M);
            TerminalCondition::Feature up{N / 2, std::vector<double>(M)};
            for (std::size_t m = 0; m < M; ++m) {
                up.values[m] = ens.value(N / 2, m)[0] > 0.0 ? 1.0 : 0.0;
                values[m] = up.values[m] * std::tanh(ens.value(N, m)[0]);
            }
            TerminalCondition xi = bounded_terminal(std::move(values), 1.0, ens.dim());
            xi.features.push_back(std::move(up));
            return xi;
        },
    };
}

InequalityReport verify_representation(const ExpectationOperator& op, const Generator& g, const Regressor& reg,
                                       const std::vector<Payoff>& payoffs, const std::vector<std::size_t>& probes,
                                       double tolerance) {
    const PathEnsemble& ens = reg.ensemble();
    require_h2(g, ens.dim());
    if (payoffs.empty() || probes.empty()) {
        throw std::invalid_argument("verify_representation: no payoffs or probe times");
    }
    for (std::size_t i : probes) {
        if (i > ens.steps()) {
            throw std::invalid_argument("verify_representation: probe past the horizon");
        }
    }
    InequalityReport r;
    r.check = "representation E = E^g";
    r.rhs = tolerance;
    std::ostringstream note;
    note << std::setprecision(4) << "relative deviation per payoff:";
    for (const Payoff& p : payoffs) {
        const TerminalCondition xi = p(ens);
        const Field a = op.evaluate_all(xi, reg);
        const Field b = solve_bsde(xi, g, reg).Y;
        double dev = 0.0;
        for (std::size_t i : probes) {
            double diff = 0.0;
            double size = 0.0;
            for (std::size_t m = 0; m < ens.paths(); ++m) {
                diff = std::max(diff, std::abs(a(i, m) - b(i, m)));
                size = std::max(size, std::abs(a(i, m)));
            }
            dev = std::max(dev, size > 0.0 ? diff / size : diff);
        }
        note << ' ' << dev;
        r.lhs = std::max(r.lhs, dev);
    }
    r.lhs_q999 = r.lhs;
    r.violation = std::max(r.lhs - r.rhs, 0.0);
    r.pass = r.lhs <= tolerance;
    r.note = note.str();
    return r;
}

void write_recovery_csv(std::ostream& out, const RecoveredGenerator& rec) {
    const std::size_t d = rec.zs.empty() ? 0 : rec.zs.front().size();
    out << "t";
    for (std::size_t k = 0; k < d; ++k) {
        out << ",z" << k + 1;
    }
    out << ",g,se,spread,converged";
    for (double h : rec.h_schedule) {
        out << ",q_h" << std::setprecision(6) << h;
    }
    out << '\n' << std::setprecision(17);
    for (std::size_t ti = 0; ti < rec.times.size(); ++ti) {
        for (std::size_t zi = 0; zi < rec.zs.size(); ++zi) {
            const std::size_t c = rec.index(ti, zi);
            out << rec.times[ti];
            for (double v : rec.zs[zi]) {
                out << ',' << v;
            }
            out << ',' << rec.value[c] << ',' << rec.se[c] << ',' << rec.spread[c] << ','
                << (rec.converged[c] ? 1 : 0);
            for (double q : rec.quotients[c]) {
                out << ',' << q;
            }
            out << '\n';
        }
    }
}

void write_mu_fit_csv(std::ostream& out, const MuFit& fit) {
    out << "mu,residual,standard_error,cells,time_stable,canonical,note\n"
        << std::setprecision(17) << fit.mu << ',' << fit.residual << ',' << fit.standard_error << ','
        << fit.z_norms.size() << ',' << (fit.time_stable ? 1 : 0) << ',' << (fit.canonical ? 1 : 0) << ','
        << csv_quoted(fit.note) << '\n';
}

}  // namespace qfe
