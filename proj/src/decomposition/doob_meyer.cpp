#include "qfe/decomposition/doob_meyer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

#include "qfe/bsde/terminal.hpp"
#include "qfe/core/parallel.hpp"

namespace qfe {

namespace {

void check_shape(const Field& Y, const PathEnsemble& ens, const char* what) {
    if (Y.rows() != ens.steps() + 1 || Y.paths() != ens.paths() || Y.width() != 1) {
        throw std::invalid_argument(std::string(what) + ": paths must have N + 1 rows of M values");
    }
}

// Pool-adjacent-violators fit of a non-decreasing sequence (equal weights).
void pava(std::vector<double>& v) {
    std::vector<double> level;
    std::vector<std::size_t> count;
    for (double x : v) {
        level.push_back(x);
        count.push_back(1);
        while (level.size() > 1 && level[level.size() - 2] > level.back()) {
            const std::size_t c = count.back() + count[count.size() - 2];
            const double l = (level.back() * static_cast<double>(count.back()) +
                              level[level.size() - 2] * static_cast<double>(count[count.size() - 2])) /
                             static_cast<double>(c);
            level.pop_back();
            count.pop_back();
            level.back() = l;
            count.back() = c;
        }
    }
    std::size_t k = 0;
    for (std::size_t b = 0; b < level.size(); ++b) {
        for (std::size_t j = 0; j < count[b]; ++j) {
            v[k++] = level[b];
        }
    }
}

}  // namespace

PenalizationRun penalize(const Field& Y, std::vector<double> z, OperatorPtr op, double n, const Regressor& reg,
                         const FixedPointOptions& opts) {
    const PathEnsemble& ens = reg.ensemble();
    check_shape(Y, ens, "penalize");
    if (!(n > 0.0)) {
        throw std::invalid_argument("penalize: n must be positive");
    }
    const std::size_t N = ens.steps();
    const std::size_t M = ens.paths();
    const double dt = ens.grid().dt();

    FixedPointProblem problem;
    problem.driver = Driver{[n](double, double y) { return -n * y; }, n};
    problem.xi.assign(Y.row(N).begin(), Y.row(N).end());
    problem.z = std::move(z);
    problem.source = Y;
    for (double& v : problem.source.data()) {
        v *= n;
    }
    problem.op = std::move(op);
    FixedPointOptions o = opts;
    if (!o.initial && o.start.empty()) {
        o.start = Y;
    }
    FixedPointSolution fp = solve_fixed_point(problem, reg, o);

    PenalizationRun run;
    run.n = n;
    run.iterations = fp.iterations;
    run.patches = fp.boundaries.size() - 1;
    run.A = Field(N + 1, M);
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t m = 0; m < M; ++m) {
            const double lo = fp.Y(i, m) - Y(i, m);
            const double hi = fp.Y(i + 1, m) - Y(i + 1, m);
            run.A(i + 1, m) = run.A(i, m) + 0.5 * dt * n * (lo + hi);
        }
    }
    for (std::size_t k = 0; k < Y.data().size(); ++k) {
        run.sup_gap = std::max(run.sup_gap, std::abs(fp.Y.data()[k] - Y.data()[k]));
    }
    double sum = 0.0;
    for (double a : run.A.row(N)) {
        sum += a;
    }
    run.mean_A_T = sum / static_cast<double>(M);
    run.y = std::move(fp.Y);
    return run;
}

void isotonic_project(Field& A, Compensator direction) {
    const std::size_t N = A.rows() - 1;
    const double sign = direction == Compensator::increasing ? 1.0 : -1.0;
    std::vector<double> v(N);
    for (std::size_t m = 0; m < A.paths(); ++m) {
        for (std::size_t i = 1; i <= N; ++i) {
            v[i - 1] = sign * A(i, m);
        }
        pava(v);
        A(0, m) = 0.0;
        for (std::size_t i = 1; i <= N; ++i) {
            // Clipping the free fit at 0 gives the fit constrained to start at A_0 = 0.
            A(i, m) = sign * std::max(v[i - 1], 0.0);
        }
    }
}

GeneratorEstimate extract_generator_pair(const Field& X, const Regressor& reg) {
    const PathEnsemble& ens = reg.ensemble();
    check_shape(X, ens, "extract_generator_pair");
    const std::size_t N = ens.steps();
    const std::size_t M = ens.paths();
    const std::size_t d = ens.dim();
    const double dt = ens.grid().dt();
    GeneratorEstimate est{Field(N, M), Field(N, M, d)};
    std::vector<double> xhat(M);
    std::vector<double> target(M);
    std::vector<double> fitted(M);
    for (std::size_t i = 0; i < N; ++i) {
        const auto proj = reg.full_projector(i);
        proj->apply(X.row(i + 1), xhat);
        auto dB = ens.increments(i);
        for (std::size_t k = 0; k < d; ++k) {
            for (std::size_t m = 0; m < M; ++m) {
                target[m] = (X(i + 1, m) - xhat[m]) * dB[m * d + k] / dt;
            }
            proj->apply(target, fitted);
            for (std::size_t m = 0; m < M; ++m) {
                est.Z(i, m, k) = fitted[m];
            }
        }
        for (std::size_t m = 0; m < M; ++m) {
            est.h(i, m) = -(xhat[m] - X(i, m)) / dt;
        }
    }
    return est;
}

double sandwich_fraction(const GeneratorEstimate& est, const GeneratorPair& pair, const TimeGrid& grid,
                         double tol) {
    std::size_t inside = 0;
    std::size_t total = 0;
    for (std::size_t i = 0; i < est.h.rows(); ++i) {
        const double t = grid.time(i);
        for (std::size_t m = 0; m < est.h.paths(); ++m) {
            const auto z = est.Z.at(i, m);
            const double h = est.h(i, m);
            inside += pair.lower(t, z) - tol <= h && h <= pair.upper(t, z) + tol;
            ++total;
        }
    }
    return total == 0 ? 1.0 : static_cast<double>(inside) / static_cast<double>(total);
}

DecompositionResult doob_meyer_decompose(const Field& Y, std::vector<double> z, OperatorPtr op,
                                         const Regressor& reg, const DecompositionOptions& opts) {
    const PathEnsemble& ens = reg.ensemble();
    check_shape(Y, ens, "doob_meyer_decompose");
    if (!op) {
        throw std::invalid_argument("doob_meyer_decompose: no operator");
    }
    const auto& sched = opts.schedule;
    if (sched.empty() || !std::is_sorted(sched.begin(), sched.end()) ||
        std::adjacent_find(sched.begin(), sched.end()) != sched.end() || !(sched.front() > 0.0)) {
        throw std::invalid_argument("doob_meyer_decompose: schedule must be positive and strictly increasing");
    }
    const std::size_t N = ens.steps();
    const std::size_t M = ens.paths();
    const std::size_t d = ens.dim();
    if (!z.empty() && z.size() != d) {
        throw std::invalid_argument("doob_meyer_decompose: z dimension mismatch");
    }

    DecompositionResult res;
    res.runs.resize(sched.size());
    parallel_for(sched.size(), opts.threads, [&](std::size_t k) {
        res.runs[k] = penalize(Y, z, op, sched[k], reg, opts.fixed_point);
    });

    const PenalizationRun& last = res.runs.back();
    res.direction = opts.direction ? *opts.direction
                                   : (last.mean_A_T >= 0.0 ? Compensator::increasing : Compensator::decreasing);
    res.A_raw = last.A;
    if (res.runs.size() >= 2) {
        // The penalization bias is O(1/n): combine the last two levels to cancel it.
        const PenalizationRun& prev = res.runs[res.runs.size() - 2];
        const double nl = last.n;
        const double np = prev.n;
        for (std::size_t k = 0; k < res.A_raw.data().size(); ++k) {
            res.A_raw.data()[k] = (nl * last.A.data()[k] - np * prev.A.data()[k]) / (nl - np);
        }
    }
    res.A = res.A_raw;
    isotonic_project(res.A, res.direction);
    for (std::size_t k = 0; k < res.A.data().size(); ++k) {
        res.isotonic_adjustment = std::max(res.isotonic_adjustment, std::abs(res.A.data()[k] - res.A_raw.data()[k]));
    }

    // X = Y - A + z.B
    Field X(N + 1, M);
    std::vector<double> zz = z.empty() ? std::vector<double>(d, 0.0) : z;
    for (std::size_t i = 0; i <= N; ++i) {
        for (std::size_t m = 0; m < M; ++m) {
            double zb = 0.0;
            auto b = ens.value(i, m);
            for (std::size_t k = 0; k < d; ++k) {
                zb += zz[k] * b[k];
            }
            X(i, m) = Y(i, m) - res.A(i, m) + zb;
        }
    }

    std::vector<double> base(M);
    double bound = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
        base[m] = Y(N, m) - res.A(N, m);
        bound = std::max(bound, std::abs(base[m]));
    }
    TerminalCondition xi = bounded_terminal(std::move(base), bound, d);
    xi.z = zz;
    xi.end.assign(M, N);
    const Field E = op->evaluate_all(xi, reg);
    std::vector<std::size_t> probes = opts.probe_steps;
    if (probes.empty()) {
        probes = {N / 4, N / 2, 3 * N / 4};
    }
    for (std::size_t i : probes) {
        if (i > N) {
            throw std::invalid_argument("doob_meyer_decompose: probe step past the horizon");
        }
        double sq = 0.0;
        for (std::size_t m = 0; m < M; ++m) {
            const double diff = E(i, m) - X(i, m);
            sq += diff * diff;
        }
        res.martingale_residual = std::max(res.martingale_residual, std::sqrt(sq / static_cast<double>(M)));
    }

    GeneratorEstimate est = extract_generator_pair(X, reg);
    res.h = std::move(est.h);
    res.Z = std::move(est.Z);

    // Increasing compensator: y^{n} >= y^{n'} >= Y for n < n'.
    const double sign = res.direction == Compensator::increasing ? 1.0 : -1.0;
    const double tol = opts.order_tolerance;
    std::size_t ok = 0;
    std::size_t total = 0;
    for (std::size_t k = 0; k < res.runs.size(); ++k) {
        const Field& upper = res.runs[k].y;
        const Field& lower = k + 1 < res.runs.size() ? res.runs[k + 1].y : Y;
        for (std::size_t i = 0; i < N; ++i) {
            for (std::size_t m = 0; m < M; ++m) {
                ok += sign * (upper(i, m) - lower(i, m)) >= -tol;
                ++total;
            }
        }
    }
    res.order_fraction = total == 0 ? 1.0 : static_cast<double>(ok) / static_cast<double>(total);
    return res;
}

void write_decomposition_csv(std::ostream& out, const DecompositionResult& result) {
    out << "n,sup_gap,mean_A_T,martingale_residual,iterations,patches\n" << std::setprecision(17);
    for (const auto& r : result.runs) {
        out << r.n << ',' << r.sup_gap << ',' << r.mean_A_T << ",," << r.iterations << ',' << r.patches << '\n';
    }
    const std::size_t N = result.A.rows() - 1;
    double sum = 0.0;
    for (double a : result.A.row(N)) {
        sum += a;
    }
    out << "limit,," << sum / static_cast<double>(result.A.paths()) << ',' << result.martingale_residual << ",,\n";
}

}  // namespace qfe
