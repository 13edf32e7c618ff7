#include "qfe/bsde/solver.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <memory>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "qfe/core/errors.hpp"
#include "qfe/core/statistics.hpp"

namespace qfe {

namespace {

// Simpson panels for time-dependent drivers.
constexpr std::size_t kSimpsonPanels = 64;

std::vector<std::size_t> scope_rows(const ProjectionScope& scope, std::size_t M) {
    std::vector<std::size_t> rows;
    rows.reserve(M);
    for (std::size_t m = 0; m < M; ++m) {
        if (scope.active.empty() || scope.active[m] != 0) {
            rows.push_back(m);
        }
    }
    return rows;
}

// Active mask and features of the terminal condition at step i. Returns false
// when no path is active.
struct StepScope {
    std::vector<unsigned char> active;
    ProjectionScope scope;
    bool any = true;
};

StepScope step_scope(const TerminalCondition& xi, std::size_t i, std::size_t N) {
    StepScope s;
    const std::size_t M = xi.paths();
    if (!xi.known_from.empty()) {
        s.active.resize(M);
        s.any = false;
        for (std::size_t m = 0; m < M; ++m) {
            s.active[m] = xi.known_step(m, N) > i ? 1 : 0;
            s.any = s.any || s.active[m] != 0;
        }
        s.scope.active = s.active;
    }
    for (const auto& f : xi.features) {
        if (f.from_step <= i) {
            s.scope.features.emplace_back(f.values);
        }
    }
    return s;
}

double shift_growth(const TerminalCondition& xi, double ell, double horizon) {
    const double a = norm(xi.z);
    return 10.0 * (xi.bound + ell * (a + a * a) * horizon);
}

}  // namespace

std::vector<double> BsdeSolution::y_row(std::size_t i) const {
    auto r = Y.row(i);
    return {r.begin(), r.end()};
}

double default_z_max(double horizon, double growth, double bound) {
    const double k = std::max(growth, 0.5);
    const double v = std::sqrt((1.0 + horizon) * std::exp(8.0 * k * bound)) * 5.0;
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
}

StepOutput backward_step(const Generator& gen, const Regressor& reg, std::size_t i,
                         std::span<const double> next, std::span<const double> shift,
                         double z_max, std::span<double> out, std::span<double> z_out,
                         const ProjectionScope& scope) {
    const PathEnsemble& ens = reg.ensemble();
    const std::size_t M = ens.paths();
    const std::size_t d = ens.dim();
    if (i >= ens.steps()) {
        throw std::out_of_range("backward_step: step must precede the horizon");
    }
    if (next.size() != M || out.size() != M || (!shift.empty() && shift.size() != M * d) ||
        (!z_out.empty() && z_out.size() != M * d)) {
        throw std::invalid_argument("backward_step: buffer size mismatch");
    }
    const auto rows = scope_rows(scope, M);
    if (rows.empty()) {
        return {};
    }
    const double dt = ens.grid().dt();
    const double t = ens.grid().time(i);
    const bool full = scope.active.empty() && scope.features.empty();
    const std::shared_ptr<const Projector> shared = full ? reg.full_projector(i) : nullptr;
    const Projector scoped = full ? Projector{} : reg.projector(i, scope);
    const Projector& proj = full ? *shared : scoped;

    std::vector<double> yhat(M, 0.0);
    proj.apply(next, yhat);

    std::vector<double> zt(M * d, 0.0);
    std::vector<double> target(M, 0.0);
    std::vector<double> fitted(M, 0.0);
    auto dB = ens.increments(i);
    double sq = 0.0;
    for (std::size_t m : rows) {
        const double r = next[m] - yhat[m];
        sq += r * r;
    }
    for (std::size_t k = 0; k < d; ++k) {
        for (std::size_t m : rows) {
            target[m] = (next[m] - yhat[m]) * dB[m * d + k] / dt;
        }
        proj.apply(target, fitted);
        for (std::size_t m : rows) {
            zt[m * d + k] = fitted[m];
        }
    }

    StepOutput result;
    result.rms = std::sqrt(sq / static_cast<double>(rows.size()));
    std::vector<double> arg(d);
    for (std::size_t m : rows) {
        std::span<double> zm(zt.data() + m * d, d);
        const double a = norm(zm);
        if (a > z_max) {
            const double s = z_max / a;
            for (double& v : zm) {
                v *= s;
            }
            ++result.clipped;
        }
        for (std::size_t k = 0; k < d; ++k) {
            arg[k] = zm[k] + (shift.empty() ? 0.0 : shift[m * d + k]);
        }
        out[m] = yhat[m] + gen(t, arg) * dt;
        if (!z_out.empty()) {
            std::copy(zm.begin(), zm.end(), z_out.begin() + static_cast<std::ptrdiff_t>(m * d));
        }
    }
    return result;
}

BsdeSolution solve_bsde(const TerminalCondition& xi, const Generator& gen, const Regressor& reg,
                        double z_max) {
    const PathEnsemble& ens = reg.ensemble();
    xi.validate(ens);
    const std::size_t N = ens.steps();
    const std::size_t M = ens.paths();
    const std::size_t d = ens.dim();
    const double T = ens.grid().horizon();
    if (!(z_max > 0.0)) {
        z_max = default_z_max(T, gen.growth(), xi.bound);
    }
    const double guard = shift_growth(xi, gen.growth(), T);

    BsdeSolution sol{ens.grid(), Field(N + 1, M), Field(N, M, d), gen.describe(), z_max, 0, {}};
    sol.regression_rms.assign(N, 0.0);
    Field& Yt = sol.Y;
    std::copy(xi.base.begin(), xi.base.end(), Yt.row(N).begin());

    std::vector<double> shift(M * d, 0.0);
    for (std::size_t i = N; i-- > 0;) {
        const StepScope s = step_scope(xi, i, N);
        for (std::size_t m = 0; m < M; ++m) {
            const bool on = xi.shift_active(i, m);
            for (std::size_t k = 0; k < d; ++k) {
                shift[m * d + k] = on ? xi.z[k] : 0.0;
            }
        }
        if (s.any) {
            const StepOutput o =
                backward_step(gen, reg, i, Yt.row(i + 1), shift, z_max, Yt.row(i), sol.Z.row(i), s.scope);
            sol.clipped += o.clipped;
            sol.regression_rms[i] = o.rms;
        }
        if (!s.active.empty()) {
            for (std::size_t m = 0; m < M; ++m) {
                if (s.active[m] == 0) {
                    Yt(i, m) = xi.base[m];
                }
            }
        }
        for (std::size_t m = 0; m < M; ++m) {
            if (!std::isfinite(Yt(i, m)) || std::abs(Yt(i, m)) > guard) {
                std::ostringstream os;
                os << "backward scheme diverged at step " << i << " (|Y| = " << std::abs(Yt(i, m))
                   << " exceeds " << guard << ")";
                throw DivergenceError(os.str());
            }
        }
    }

    if (xi.has_shift()) {
        for (std::size_t i = 0; i <= N; ++i) {
            for (std::size_t m = 0; m < M; ++m) {
                Yt(i, m) += xi.shift_value(ens, i, m);
                if (i < N && xi.shift_active(i, m)) {
                    for (std::size_t k = 0; k < d; ++k) {
                        sol.Z(i, m, k) += xi.z[k];
                    }
                }
            }
        }
    }
    return sol;
}

BsdeSolution solve_shifted(std::span<const double> xi0, double bound, std::span<const double> z,
                           const StoppingTime& tau, const Generator& gen, const Regressor& reg,
                           double z_max) {
    const auto xi = affine_terminal({xi0.begin(), xi0.end()}, bound, {z.begin(), z.end()}, tau);
    return solve_bsde(xi, gen, reg, z_max);
}

std::vector<double> conditional_g_expectation(const TerminalCondition& xi, const Generator& gen,
                                              const Regressor& reg, std::size_t step, double z_max) {
    if (step > reg.ensemble().steps()) {
        throw std::out_of_range("conditional_g_expectation: step past the horizon");
    }
    return solve_bsde(xi, gen, reg, z_max).y_row(step);
}

ColeHopfResult cole_hopf_oracle(double gamma, const TerminalCondition& xi, const Regressor& reg) {
    if (!(gamma > 0.0)) {
        throw std::invalid_argument("cole_hopf_oracle: gamma must be positive");
    }
    const PathEnsemble& ens = reg.ensemble();
    xi.validate(ens);
    const std::size_t N = ens.steps();
    const std::size_t M = ens.paths();
    const std::size_t d = ens.dim();

    // W = exp(gamma (Y~ - s)) with s = max xi0 keeps the chain in range.
    const double s = *std::max_element(xi.base.begin(), xi.base.end());
    Field W(N + 1, M);
    for (std::size_t m = 0; m < M; ++m) {
        W(N, m) = std::exp(gamma * (xi.base[m] - s));
    }
    std::vector<double> target(M, 0.0);
    for (std::size_t i = N; i-- > 0;) {
        const StepScope sc = step_scope(xi, i, N);
        auto dB = ens.increments(i);
        for (std::size_t m = 0; m < M; ++m) {
            double e = 0.0;
            if (xi.shift_active(i, m)) {
                for (std::size_t k = 0; k < d; ++k) {
                    e += xi.z[k] * dB[m * d + k];
                }
            }
            target[m] = std::exp(gamma * e) * W(i + 1, m);
        }
        if (sc.any) {
            if (sc.scope.active.empty() && sc.scope.features.empty()) {
                reg.full_projector(i)->apply(target, W.row(i));
            } else {
                reg.projector(i, sc.scope).apply(target, W.row(i));
            }
        }
        for (std::size_t m = 0; m < M; ++m) {
            if (!sc.active.empty() && sc.active[m] == 0) {
                W(i, m) = W(i + 1, m);
            }
            if (!(W(i, m) > 0.0)) {
                std::ostringstream os;
                os << "Cole-Hopf chain left the log domain at step " << i << " (" << reg.basis().describe()
                   << ")";
                throw DegenerateBasisError(os.str());
            }
        }
    }

    ColeHopfResult res{Field(N + 1, M), 0.0};
    for (std::size_t i = 0; i <= N; ++i) {
        for (std::size_t m = 0; m < M; ++m) {
            res.Y(i, m) = s + std::log(W(i, m)) / gamma + xi.shift_value(ens, i, m);
        }
    }
    // Direct estimator (1/gamma) log mean e^{gamma xi}, delta method.
    const auto total = xi.values(ens);
    const double top = *std::max_element(total.begin(), total.end());
    std::vector<double> e(M);
    for (std::size_t m = 0; m < M; ++m) {
        e[m] = std::exp(gamma * (total[m] - top));
    }
    res.y0_standard_error = standard_error(e) / (mean(e) * gamma);
    return res;
}

double integrate_driver(const Generator& gen, std::span<const double> z, double a, double b) {
    if (b <= a) {
        return 0.0;
    }
    if (!gen.time_dependent()) {
        return (b - a) * gen(a, z);
    }
    const double h = (b - a) / static_cast<double>(kSimpsonPanels);
    double acc = gen(a, z) + gen(b, z);
    for (std::size_t k = 1; k < kSimpsonPanels; ++k) {
        acc += (k % 2 == 1 ? 4.0 : 2.0) * gen(a + static_cast<double>(k) * h, z);
    }
    return acc * h / 3.0;
}

double deterministic_gexp_affine(const Generator& gen, std::span<const double> z, double t,
                                 std::span<const double> b_t, double horizon) {
    if (z.size() != b_t.size()) {
        throw std::invalid_argument("deterministic_gexp_affine: dimension mismatch");
    }
    double lin = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) {
        lin += z[k] * b_t[k];
    }
    return lin + integrate_driver(gen, z, t, horizon);
}

void write_solution_csv(std::ostream& out, const BsdeSolution& sol) {
    const std::size_t N = sol.grid.steps();
    const std::size_t M = sol.Y.paths();
    out << "i,t,mean_Y,std_Y,mean_abs_Z,residual\n";
    out << std::setprecision(17);
    for (std::size_t i = 0; i <= N; ++i) {
        const auto y = sol.Y.row(i);
        double za = 0.0;
        if (i < N) {
            for (std::size_t m = 0; m < M; ++m) {
                za += norm(sol.Z.at(i, m));
            }
            za /= static_cast<double>(M);
        }
        const double res = i < N ? sol.regression_rms[i] : 0.0;
        out << i << ',' << sol.grid.time(i) << ',' << mean(y) << ',' << std::sqrt(variance(y)) << ','
            << za << ',' << res << '\n';
    }
}

void write_solution_paths_csv(std::ostream& out, const BsdeSolution& sol) {
    const std::size_t N = sol.grid.steps();
    const std::size_t M = sol.Y.paths();
    const std::size_t d = sol.Z.width();
    out << "i,m,t,Y";
    for (std::size_t k = 0; k < d; ++k) {
        out << ",Z" << k;
    }
    out << '\n' << std::setprecision(17);
    for (std::size_t i = 0; i <= N; ++i) {
        for (std::size_t m = 0; m < M; ++m) {
            out << i << ',' << m << ',' << sol.grid.time(i) << ',' << sol.Y(i, m);
            for (std::size_t k = 0; k < d; ++k) {
                out << ',' << (i < N ? sol.Z(i, m, k) : 0.0);
            }
            out << '\n';
        }
    }
}

}  // namespace qfe
