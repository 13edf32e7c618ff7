#include "qfe/axioms/harness.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "qfe/core/parallel.hpp"
#include "qfe/core/statistics.hpp"

namespace qfe {

namespace {

// Replicates are grouped into a fixed number of blocks merged in order, so
// the result does not depend on the thread count.
constexpr std::size_t kBootstrapBlocks = 8;

double max_abs_field(const Field& f) {
    double m = 0.0;
    for (double v : f.data()) {
        m = std::max(m, std::abs(v));
    }
    return m;
}

double max_abs_vec(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) {
        m = std::max(m, std::abs(x));
    }
    return m;
}

std::vector<std::size_t> resample_indices(std::size_t M, std::uint64_t seed, std::size_t replicate) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(replicate), static_cast<std::uint32_t>(replicate >> 32)};
    std::mt19937_64 rng(seq);
    std::uniform_int_distribution<std::size_t> pick(0, M - 1);
    std::vector<std::size_t> idx(M);
    for (auto& k : idx) {
        k = pick(rng);
    }
    return idx;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(6) << v;
    return os.str();
}

}  // namespace

Payoff terminal_payoff(std::function<double(double)> phi, double bound) {
    return [phi = std::move(phi), bound](const PathEnsemble& ens) {
        return functional_terminal(ens, [&](std::span<const double> b) { return phi(b[0]); }, bound);
    };
}

std::string axiom_csv_header() {
    return "check,operator,pass,worst_violation,max_discrepancy,tolerance,fail_fraction,path_steps,paths,resamples,note";
}

std::string to_csv_row(const AxiomReport& r) {
    std::ostringstream os;
    os << std::setprecision(10);
    auto quoted = [](const std::string& s) {
        std::string out = "\"";
        for (char c : s) {
            out += c;
            if (c == '"') {
                out += '"';
            }
        }
        return out + "\"";
    };
    os << quoted(r.check) << ',' << quoted(r.op) << ',' << (r.pass ? 1 : 0) << ',' << r.worst_violation << ','
       << r.max_discrepancy << ',' << r.tolerance << ',' << r.fail_fraction << ',' << r.path_steps << ','
       << r.paths << ',' << r.resamples << ',' << quoted(r.note);
    return os.str();
}

std::string summary(const AxiomReport& r) {
    std::ostringstream os;
    os << (r.pass ? "PASS " : "FAIL ") << r.check << " [" << r.op << "]\n"
       << "  max discrepancy " << fmt(r.max_discrepancy) << ", worst excess " << fmt(r.worst_violation)
       << ", median tolerance " << fmt(r.tolerance) << "\n"
       << "  failing path-steps " << fmt(100.0 * r.fail_fraction) << "% of " << r.path_steps << " (" << r.paths
       << " paths, " << r.resamples << " resamples)\n";
    if (!r.note.empty()) {
        os << "  " << r.note << "\n";
    }
    return os.str();
}

void write_axiom_csv(std::ostream& out, const std::vector<AxiomReport>& reports) {
    out << axiom_csv_header() << '\n';
    for (const auto& r : reports) {
        out << to_csv_row(r) << '\n';
    }
}

AxiomReport assess(std::string check, std::string op, const DiscrepancyFn& fn, const Regressor& reg,
                   Sidedness sides, const BootstrapOptions& opts) {
    const PathEnsemble& ens = reg.ensemble();
    const std::size_t M = ens.paths();
    const Discrepancy base = fn(reg);
    const std::size_t R = base.d.rows();
    if (base.d.paths() != M || base.d.width() != 1) {
        throw std::logic_error("assess: discrepancy field has the wrong shape");
    }

    const double floor = opts.relative_floor * std::max(base.scale, 1e-300);
    auto violation = [&](double d) { return sides == Sidedness::two_sided ? std::abs(d) : std::max(d, 0.0); };
    double largest = 0.0;
    for (double d : base.d.data()) {
        largest = std::max(largest, violation(d));
    }
    // Below the floor everywhere: the verdict cannot depend on the standard errors.
    const std::size_t reps = largest <= floor ? 0 : opts.resamples;

    std::vector<std::vector<RunningStats>> acc(kBootstrapBlocks, std::vector<RunningStats>(reps > 0 ? R * M : 0));
    parallel_for(kBootstrapBlocks, opts.threads, [&](std::size_t b) {
        for (std::size_t r = b * reps / kBootstrapBlocks; r < (b + 1) * reps / kBootstrapBlocks; ++r) {
            const auto idx = resample_indices(M, opts.seed, r);
            const PathEnsemble ens_r = ens.resampled(idx);
            const Regressor reg_r(ens_r, reg.basis());
            const Discrepancy dr = fn(reg_r);
            std::vector<std::ptrdiff_t> pos(M, -1);
            for (std::size_t n = 0; n < M; ++n) {
                if (pos[idx[n]] < 0) {
                    pos[idx[n]] = static_cast<std::ptrdiff_t>(n);
                }
            }
            for (std::size_t p = 0; p < M; ++p) {
                if (pos[p] < 0) {
                    continue;
                }
                for (std::size_t row = 0; row < R; ++row) {
                    acc[b][row * M + p].add(dr.d(row, static_cast<std::size_t>(pos[p])));
                }
            }
        }
    });
    std::vector<RunningStats> total(R * M);
    for (const auto& block : acc) {
        for (std::size_t k = 0; k < block.size(); ++k) {
            total[k].merge(block[k]);
        }
    }

    std::vector<double> thresholds;
    thresholds.reserve(R * M);
    AxiomReport rep;
    rep.check = std::move(check);
    rep.op = std::move(op);
    rep.paths = M;
    rep.resamples = reps;
    rep.path_steps = R * M;
    std::size_t fails = 0;
    for (std::size_t row = 0; row < R; ++row) {
        std::vector<double> se(M, 0.0);
        std::vector<double> known;
        for (std::size_t p = 0; p < M; ++p) {
            const auto& s = total[row * M + p];
            se[p] = s.count() >= 2 ? s.stddev() : -1.0;
            if (se[p] >= 0.0) {
                known.push_back(se[p]);
            }
        }
        // Paths drawn fewer than twice borrow the row's median standard error.
        const double fallback = known.empty() ? 0.0 : quantile(known, 0.5);
        for (std::size_t p = 0; p < M; ++p) {
            const double d = base.d(row, p);
            const double e = violation(d);
            const double thr = std::max(3.0 * (se[p] >= 0.0 ? se[p] : fallback), floor);
            thresholds.push_back(thr);
            rep.max_discrepancy = std::max(rep.max_discrepancy, e);
            if (e > thr) {
                ++fails;
                rep.worst_violation = std::max(rep.worst_violation, e - thr);
            }
        }
    }
    rep.tolerance = thresholds.empty() ? floor : quantile(thresholds, 0.5);
    rep.fail_fraction = rep.path_steps == 0 ? 0.0 : static_cast<double>(fails) / static_cast<double>(rep.path_steps);
    rep.pass = rep.fail_fraction <= opts.max_fail_fraction;
    if (reps == 0 && opts.resamples > 0) {
        rep.note = "all discrepancies within the floor; bootstrap skipped";
    }
    return rep;
}

AxiomReport check_monotonicity(const ExpectationOperator& op, const std::vector<std::pair<Payoff, Payoff>>& pairs,
                               const std::vector<std::size_t>& steps, const Regressor& reg,
                               const BootstrapOptions& opts) {
    {
        const PathEnsemble& ens = reg.ensemble();
        for (const auto& [xi, eta] : pairs) {
            const auto a = xi(ens).values(ens);
            const auto b = eta(ens).values(ens);
            for (std::size_t m = 0; m < a.size(); ++m) {
                if (a[m] < b[m]) {
                    throw std::invalid_argument("check_monotonicity: pair is not ordered pathwise");
                }
            }
        }
    }
    auto fn = [&](const Regressor& r) {
        const PathEnsemble& ens = r.ensemble();
        Discrepancy out{Field(pairs.size() * steps.size(), ens.paths()), 0.0};
        std::size_t row = 0;
        for (const auto& [xi, eta] : pairs) {
            const Field a = op.evaluate_all(xi(ens), r);
            const Field b = op.evaluate_all(eta(ens), r);
            out.scale = std::max({out.scale, max_abs_field(a), max_abs_field(b)});
            for (std::size_t i : steps) {
                for (std::size_t m = 0; m < ens.paths(); ++m) {
                    out.d(row, m) = b(i, m) - a(i, m);
                }
                ++row;
            }
        }
        return out;
    };
    return assess("A1 monotonicity", op.describe(), fn, reg, Sidedness::one_sided, opts);
}

AxiomReport check_constant_preserving(const ExpectationOperator& op, const std::vector<double>& constants,
                                      const std::vector<std::size_t>& steps, const Regressor& reg,
                                      const BootstrapOptions& opts) {
    auto fn = [&](const Regressor& r) {
        const PathEnsemble& ens = r.ensemble();
        Discrepancy out{Field(constants.size() * steps.size(), ens.paths()), 0.0};
        std::size_t row = 0;
        for (double c : constants) {
            const Field y = op.evaluate_all(constant_terminal(ens, c), r);
            out.scale = std::max(out.scale, std::abs(c));
            for (std::size_t i : steps) {
                for (std::size_t m = 0; m < ens.paths(); ++m) {
                    out.d(row, m) = y(i, m) - c;
                }
                ++row;
            }
        }
        return out;
    };
    return assess("A2 constant preserving", op.describe(), fn, reg, Sidedness::two_sided, opts);
}

AxiomReport check_time_consistency(const ExpectationOperator& op, const Payoff& xi, std::size_t s, std::size_t t,
                                   const Regressor& reg, const BootstrapOptions& opts) {
    if (s > t || t > reg.ensemble().steps()) {
        throw std::invalid_argument("check_time_consistency: need s <= t <= N");
    }
    auto fn = [&](const Regressor& r) {
        const PathEnsemble& ens = r.ensemble();
        const Field direct = op.evaluate_all(xi(ens), r);
        Discrepancy out{Field(1, ens.paths()), max_abs_field(direct)};
        if (t == ens.steps()) {
            return out;
        }
        auto inner_row = direct.row(t);
        std::vector<double> inner(inner_row.begin(), inner_row.end());
        const double bound = max_abs_vec(inner);
        const PathEnsemble head = ens.truncated(t);
        const Regressor head_reg(head, r.basis());
        const auto nested = op.evaluate_at(bounded_terminal(std::move(inner), bound, ens.dim()), head_reg, s);
        for (std::size_t m = 0; m < ens.paths(); ++m) {
            out.d(0, m) = nested[m] - direct(s, m);
        }
        return out;
    };
    std::ostringstream name;
    name << "A3 time consistency (s=" << s << ", t=" << t << ")";
    return assess(name.str(), op.describe(), fn, reg, Sidedness::two_sided, opts);
}

std::vector<double> ThresholdEvent::indicator(const PathEnsemble& ens) const {
    if (step > ens.steps() || component >= ens.dim()) {
        throw std::invalid_argument("threshold event outside the ensemble");
    }
    std::vector<double> out(ens.paths());
    for (std::size_t m = 0; m < out.size(); ++m) {
        out[m] = ens.value(step, m)[component] > level ? 1.0 : 0.0;
    }
    return out;
}

AxiomReport check_zero_one_law(const ExpectationOperator& op, const Payoff& xi, const ThresholdEvent& event,
                               const Regressor& reg, const BootstrapOptions& opts) {
    auto fn = [&](const Regressor& r) {
        const PathEnsemble& ens = r.ensemble();
        const std::size_t N = ens.steps();
        const TerminalCondition x = xi(ens);
        if (x.has_shift()) {
            throw std::invalid_argument("check_zero_one_law: payoff must be bounded");
        }
        const auto a = event.indicator(ens);
        std::vector<double> masked(x.base);
        for (std::size_t m = 0; m < masked.size(); ++m) {
            masked[m] *= a[m];
        }
        TerminalCondition x_a = x.with_base(std::move(masked), x.bound);
        x_a.features.push_back({event.step, a});
        const Field lhs = op.evaluate_all(x_a, r);
        const Field rhs = op.evaluate_all(x, r);
        Discrepancy out{Field(N + 1 - event.step, ens.paths()), std::max(max_abs_field(lhs), max_abs_field(rhs))};
        for (std::size_t i = event.step; i <= N; ++i) {
            for (std::size_t m = 0; m < ens.paths(); ++m) {
                out.d(i - event.step, m) = lhs(i, m) - a[m] * rhs(i, m);
            }
        }
        return out;
    };
    std::ostringstream name;
    name << "A4 zero-one law (B_" << event.step << " > " << event.level << ")";
    return assess(name.str(), op.describe(), fn, reg, Sidedness::two_sided, opts);
}

AxiomReport check_translation_invariance(const ExpectationOperator& op, const Payoff& xi, const PathValues& eta,
                                         std::size_t t, const Regressor& reg, const BootstrapOptions& opts) {
    if (t > reg.ensemble().steps()) {
        throw std::invalid_argument("check_translation_invariance: step past the horizon");
    }
    auto fn = [&](const Regressor& r) {
        const PathEnsemble& ens = r.ensemble();
        const std::size_t N = ens.steps();
        const TerminalCondition x = xi(ens);
        const auto h = eta(ens);
        if (h.size() != ens.paths()) {
            throw std::invalid_argument("check_translation_invariance: eta size mismatch");
        }
        std::vector<double> shifted(x.base);
        for (std::size_t m = 0; m < shifted.size(); ++m) {
            shifted[m] += h[m];
        }
        TerminalCondition x_h = x.with_base(std::move(shifted), x.bound + max_abs_vec(h));
        x_h.features.push_back({t, h});
        const Field lhs = op.evaluate_all(x_h, r);
        const Field rhs = op.evaluate_all(x, r);
        Discrepancy out{Field(N + 1 - t, ens.paths()), std::max(max_abs_field(lhs), max_abs_field(rhs))};
        for (std::size_t i = t; i <= N; ++i) {
            for (std::size_t m = 0; m < ens.paths(); ++m) {
                out.d(i - t, m) = lhs(i, m) - rhs(i, m) - h[m];
            }
        }
        return out;
    };
    std::ostringstream name;
    name << "translation invariance (t=" << t << ")";
    return assess(name.str(), op.describe(), fn, reg, Sidedness::two_sided, opts);
}

AxiomReport check_optional_sampling(const ExpectationOperator& op, const Payoff& xi, std::vector<double> z,
                                    const StoppingRule& tau, const StoppingRule& sigma, const Regressor& reg,
                                    const BootstrapOptions& opts) {
    if (z.size() != reg.ensemble().dim()) {
        throw std::invalid_argument("check_optional_sampling: z dimension mismatch");
    }
    auto fn = [&](const Regressor& r) {
        const PathEnsemble& ens = r.ensemble();
        const std::size_t M = ens.paths();
        const std::size_t N = ens.steps();
        TerminalCondition x = xi(ens);
        if (x.has_shift()) {
            throw std::invalid_argument("check_optional_sampling: base payoff must be bounded");
        }
        x.z = z;
        x.start.assign(M, 0);
        x.end.assign(M, N);
        // Y = X + z . B is the martingale.
        const Field Y = op.evaluate_all(x, r);
        const StoppingTime ta = tau(ens);
        const StoppingTime sg = sigma(ens);
        std::vector<double> stopped(M);
        for (std::size_t m = 0; m < M; ++m) {
            stopped[m] = Y(ta[m], m) - x.shift_value(ens, ta[m], m);
        }
        TerminalCondition q = bounded_terminal(stopped, max_abs_vec(stopped), ens.dim());
        q.z = z;
        q.end = ta.index;
        q.known_from = ta.index;
        const Field lhs = op.evaluate_all(q, r);
        Discrepancy out{Field(1, M), max_abs_field(Y)};
        for (std::size_t m = 0; m < M; ++m) {
            out.d(0, m) = lhs(sg[m], m) - Y(std::min(ta[m], sg[m]), m);
        }
        return out;
    };
    return assess("optional sampling", op.describe(), fn, reg, Sidedness::two_sided, opts);
}

PathEnsemble twin_ensemble(const PathEnsemble& ens, std::size_t step, std::uint64_t seed) {
    if (step > ens.steps()) {
        throw std::invalid_argument("twin_ensemble: step past the horizon");
    }
    const PathEnsemble fresh = simulate_brownian(ens.grid(), ens.dim(), ens.paths(), seed);
    Field inc(ens.increment_field());
    for (std::size_t m = 1; m < ens.paths(); m += 2) {
        for (std::size_t i = 0; i < ens.steps(); ++i) {
            auto src = i < step ? ens.increment(i, m - 1) : fresh.increment(i, m);
            std::copy(src.begin(), src.end(), inc.at(i, m).begin());
        }
    }
    return PathEnsemble(ens.grid(), ens.dim(), std::move(inc), ens.seed());
}

AxiomReport check_measurability(const ExpectationOperator& op, const Payoff& xi, std::size_t step,
                                const Regressor& reg) {
    const PathEnsemble twins = twin_ensemble(reg.ensemble(), step, reg.ensemble().seed() ^ 0x9e3779b97f4a7c15ULL);
    const Regressor twin_reg(twins, reg.basis());
    const Field y = op.evaluate_all(xi(twins), twin_reg);
    AxiomReport rep;
    std::ostringstream name;
    name << "measurability (twins split at " << step << ")";
    rep.check = name.str();
    rep.op = op.describe();
    rep.paths = twins.paths();
    std::size_t fails = 0;
    for (std::size_t i = 0; i <= step; ++i) {
        for (std::size_t m = 1; m < twins.paths(); m += 2) {
            const double diff = std::abs(y(i, m) - y(i, m - 1));
            rep.max_discrepancy = std::max(rep.max_discrepancy, diff);
            fails += diff != 0.0;
            ++rep.path_steps;
        }
    }
    rep.worst_violation = rep.max_discrepancy;
    rep.fail_fraction = rep.path_steps == 0 ? 0.0 : static_cast<double>(fails) / static_cast<double>(rep.path_steps);
    rep.pass = fails == 0;
    std::ostringstream note;
    note << "exact comparison; max one-step jump of the evaluated paths " << fmt(max_one_step_jump(y));
    rep.note = note.str();
    return rep;
}

std::vector<AxiomReport> run_axiom_battery(const ExpectationOperator& op, const Regressor& reg,
                                           const BootstrapOptions& opts) {
    const std::size_t N = reg.ensemble().steps();
    std::vector<std::size_t> all(N + 1);
    for (std::size_t i = 0; i <= N; ++i) {
        all[i] = i;
    }
    const std::size_t mid = N / 2;
    const Payoff capped_abs = terminal_payoff([](double b) { return std::min(std::abs(b), 2.0); }, 2.0);
    const Payoff zero = terminal_payoff([](double) { return 0.0; }, 0.0);
    const Payoff tanh_plus = terminal_payoff([](double b) { return std::tanh(b) + 1.0; }, 2.0);
    const Payoff tanh_b = terminal_payoff([](double b) { return std::tanh(b); }, 1.0);
    const Payoff cos_b = terminal_payoff([](double b) { return std::cos(b); }, 1.0);
    const PathValues eta = [mid](const PathEnsemble& ens) {
        std::vector<double> v(ens.paths());
        for (std::size_t m = 0; m < v.size(); ++m) {
            v[m] = std::tanh(ens.value(mid, m)[0]);
        }
        return v;
    };

    std::vector<AxiomReport> out;
    out.push_back(check_monotonicity(op, {{capped_abs, zero}, {tanh_plus, tanh_b}}, all, reg, opts));
    out.push_back(check_constant_preserving(op, {-1.0, 0.0, 3.0}, all, reg, opts));
    out.push_back(check_time_consistency(op, cos_b, N / 4, mid, reg, opts));
    out.push_back(check_zero_one_law(op, tanh_b, ThresholdEvent{mid, 0, 0.0}, reg, opts));
    out.push_back(check_translation_invariance(op, cos_b, eta, mid, reg, opts));
    out.push_back(check_measurability(op, cos_b, mid, reg));
    return out;
}

}  // namespace qfe
