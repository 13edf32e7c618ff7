// Acceptance suite: one PASS/FAIL line per criterion at pinned tolerances.
//   qfe_acceptance [--configs DIR] [--scratch DIR] [--only AC1,AC5,...]
// Exit status 0 iff every selected criterion passes.
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qfe/axioms/harness.hpp"
#include "qfe/bmo/bmo.hpp"
#include "qfe/bmo/domination.hpp"
#include "qfe/bsde/solver.hpp"
#include "qfe/cli/config.hpp"
#include "qfe/cli/runner.hpp"
#include "qfe/core/statistics.hpp"
#include "qfe/decomposition/doob_meyer.hpp"
#include "qfe/representation/representation.hpp"

using namespace qfe;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int precision = 6) {
    std::ostringstream os;
    os << std::setprecision(precision) << v;
    return os.str();
}

// Entropic benchmark: gamma = 1, xi = cos(B_T), d = 1, T = 1, N = 50, M = 2^16.
struct Benchmark {
    PathEnsemble ens = simulate_brownian(make_grid(1.0, 50), 1, 1 << 16, 7);
    Regressor reg{ens, RegressionBasis::piecewise_local(32)};
    TerminalCondition xi = functional_terminal(ens, [](auto b) { return std::cos(b[0]); }, 1.0);
    double solve_seconds = 0.0;
    BsdeSolution sol = timed_solve();

    BsdeSolution timed_solve() {
        const auto t0 = Clock::now();
        auto s = solve_bsde(xi, entropic_generator(1.0), reg);
        solve_seconds = seconds_since(t0);
        return s;
    }
};

Benchmark& benchmark() {
    static Benchmark b;
    return b;
}

Verdict ac1() {
    auto& b = benchmark();
    const auto oracle = cole_hopf_oracle(1.0, b.xi, b.reg);
    const double y = b.sol.Y(0, 0);
    const double o = oracle.Y(0, 0);
    const double rel = std::abs(y - o) / std::abs(o);
    return {rel <= 0.02 && b.solve_seconds <= 60.0,
            "Y0 solver " + fmt(y) + ", oracle " + fmt(o) + ", rel error " + fmt(rel, 3) + " (<= 0.02), solve " +
                fmt(b.solve_seconds, 3) + " s (<= 60 s)"};
}

Verdict ac2() {
    auto& b = benchmark();
    const auto r = cole_hopf_oracle(1.0, increment_terminal(b.ens, {1.0}, 0, b.ens.steps()), b.reg);
    const double y = r.Y(0, 0);
    const double se = r.y0_standard_error;
    return {std::abs(y - 0.5) <= 3.0 * se && se > 0.0,
            "Y0 " + fmt(y) + ", |Y0 - 0.5| = " + fmt(std::abs(y - 0.5), 3) + " vs 3 SE = " + fmt(3.0 * se, 3)};
}

Verdict ac3() {
    bool ok = true;
    std::size_t cases = 0;
    for (std::size_t N : {1, 7, 50}) {
        for (std::size_t M : {16, 1000, 4096}) {
            const PathEnsemble ens = simulate_brownian(make_grid(1.0, N), 1, M, 100 + N + M);
            const Regressor reg(ens, RegressionBasis::piecewise_local(8));
            for (double c : {-1.0, 0.0, 3.0}) {
                for (const auto& g : {entropic_generator(1.0), canonical_generator(1.5), zero_generator()}) {
                    const auto sol = solve_bsde(constant_terminal(ens, c), g, reg);
                    for (double y : sol.Y.data()) {
                        ok = ok && y == c;
                    }
                    ++cases;
                }
            }
        }
    }
    return {ok, std::to_string(cases) + " (c, N, M, g) cases, every Y entry equal to c exactly"};
}

Verdict ac4() {
    const PathEnsemble ens = simulate_brownian(make_grid(1.0, 50), 1, 1 << 15, 21);
    const Regressor reg(ens, RegressionBasis::piecewise_local(32));
    BootstrapOptions opts;
    std::ostringstream detail;
    bool ok = true;
    double slowest = 0.0;
    for (const char* spec : {"linear", "entropic:1"}) {
        const auto t0 = Clock::now();
        const auto reports = run_axiom_battery(*make_operator(spec), reg, opts);
        const double secs = seconds_since(t0);
        slowest = std::max(slowest, secs);
        std::size_t passed = 0;
        for (const auto& r : reports) {
            passed += r.pass ? 1 : 0;
        }
        ok = ok && passed == reports.size();
        detail << spec << " " << passed << "/" << reports.size() << " pass in " << fmt(secs, 3) << " s; ";
    }
    const FaultyExpectation faulty(make_operator("linear"), FaultyExpectation::Kind::bias, 0.1);
    const auto a2 = check_constant_preserving(faulty, {-1.0, 0.0, 3.0}, {0, 10, 25, 49}, reg, opts);
    ok = ok && !a2.pass && slowest <= 300.0;
    detail << "+0.1 bias fails A2: " << (a2.pass ? "no" : "yes") << " (fail fraction " << fmt(a2.fail_fraction, 3)
           << ")";
    return {ok, detail.str()};
}

// phi_alpha from its definition in long double, as an independent reference.
long double phi_reference(long double alpha, long double x) {
    const long double inner = (1.0L - 2.0L * std::pow(alpha, -x)) * (2.0L * x - 1.0L) / (2.0L * x - 2.0L);
    return std::sqrt(1.0L + std::log(inner) / (x * x)) - 1.0L;
}

Verdict ac5() {
    const double v = phi_alpha(3.0, 2.0);
    const double ref = static_cast<double>(phi_reference(3.0L, 2.0L));
    bool ok = std::abs(v - 0.019087) <= 1e-6 && std::abs(v - ref) <= 1e-12;
    double worst = 0.0;
    for (double J : {1e-3, 1e-2, 1e-1, 1.0, 10.0}) {
        const auto h = solve_p_for_bmo(3.0, J);
        const double res = std::abs(phi_alpha_u(3.0, h.u) - J);
        worst = std::max(worst, res);
    }
    ok = ok && worst <= 1e-10;
    bool decreasing = true;
    double prev = std::numeric_limits<double>::infinity();
    for (double u = 1e-3; u <= 50.0; u *= 1.05) {
        const double p = phi_alpha_u(3.0, u);
        decreasing = decreasing && p < prev;
        prev = p;
    }
    ok = ok && decreasing;
    return {ok, "phi_3(2) = " + fmt(v, 10) + " (reference " + fmt(ref, 10) + "), worst round-trip residual " +
                    fmt(worst, 3) + ", strictly decreasing: " + (decreasing ? "yes" : "no")};
}

Verdict ac6() {
    auto& b = benchmark();
    const auto r = bmo_bound_from_solution(b.sol, 1.0, b.reg);
    Field Z = b.sol.Z;
    for (double& v : Z.data()) {
        v *= 100.0;
    }
    const auto inflated = bmo_bound_from_solution(b.sol.Y, Z, 1.0, b.reg);
    return {r.pass && !inflated.pass,
            "||Z||^2_BMO " + fmt(r.lhs, 4) + " <= " + fmt(r.rhs, 5) + ": " + (r.pass ? "yes" : "no") +
                "; x100 inflated " + fmt(inflated.lhs, 5) + " flagged: " + (inflated.pass ? "no" : "yes")};
}

Verdict ac7() {
    auto& b = benchmark();
    const auto bmo = bmo_norm(b.sol.Z, b.reg, default_bmo_hitting(b.ens));
    bool ok = true;
    std::ostringstream detail;
    detail << "||Z||^2_BMO " << fmt(bmo.value, 4);
    for (unsigned n : {1u, 2u, 3u}) {
        const auto r = check_energy_inequality(b.sol.Z, b.ens.grid(), n, bmo);
        ok = ok && r.pass;
        detail << "; n=" << n << ": " << fmt(r.lhs, 4) << " <= " << fmt(r.rhs, 4);
    }
    return {ok, detail.str()};
}

Verdict ac8() {
    auto& b = benchmark();
    BootstrapOptions opts;
    opts.resamples = 40;
    const StoppingRule tau = [](const PathEnsemble& e) { return StoppingTime::constant(e.paths(), e.steps()); };
    const auto linf = check_linf_domination(*make_operator("entropic:1"),
                                            terminal_payoff([](double x) { return std::tanh(x); }, 1.0),
                                            terminal_payoff([](double) { return 0.0; }, 1.0), tau, {1.0}, b.reg, opts);
    const auto demo = domination_failure_demo(1.0, 1.0, b.ens);
    const double gap = demo.lhs - demo.rhs;
    return {linf.pass && demo.pass && gap >= 3.0 * demo.standard_error,
            "Linf lhs " + fmt(linf.lhs, 5) + " vs rhs " + fmt(linf.rhs, 5) + " (fail fraction " +
                fmt(linf.fail_fraction, 3) + "): " + (linf.pass ? "pass" : "fail") + "; demo gap " + fmt(gap, 4) +
                " vs 3 SE " + fmt(3.0 * demo.standard_error, 3)};
}

Verdict ac9() {
    const PathEnsemble ens = simulate_brownian(make_grid(1.0, 40), 1, 1024, 3);
    const Regressor reg(ens, RegressionBasis::piecewise_local(8));
    const double lambda = 2.0;
    const double c = 1.5;
    FixedPointProblem p;
    p.driver = Driver{[lambda](double, double y) { return -lambda * y; }, lambda};
    p.xi.assign(ens.paths(), c);
    p.op = make_operator("linear");
    FixedPointOptions o;
    o.patches = 4;
    o.tol = 1e-13;
    const auto sol = solve_fixed_point(p, reg, o);
    double worst_ratio = 0.0;
    for (const auto& h : sol.residuals) {
        for (std::size_t k = 0; k + 1 < h.size(); ++k) {
            if (h[k] > 1e-12) {
                worst_ratio = std::max(worst_ratio, h[k + 1] / h[k]);
            }
        }
    }
    const double exact = c * std::exp(-lambda);
    const double rel = std::abs(sol.Y(0, 0) - exact) / exact;
    return {worst_ratio <= 0.55 && rel <= 0.01,
            "worst residual ratio " + fmt(worst_ratio, 4) + " (<= 0.55) over " + std::to_string(sol.residuals.size()) +
                " patches; Y0 " + fmt(sol.Y(0, 0)) + " vs " + fmt(exact) + ", rel error " + fmt(rel, 3)};
}

Verdict ac10() {
    const auto t0 = Clock::now();
    const PathEnsemble ens = simulate_brownian(make_grid(1.0, 64), 1, 1 << 14, 41);
    const Regressor reg(ens, RegressionBasis::piecewise_local(32));
    auto cp = canonical_process({1.0}, 1.0, ens);
    const auto res = decompose_canonical(cp, make_operator("entropic:1"), reg);
    const double rate = 0.5 + cp.drift();
    double sup_err = 0.0;
    for (std::size_t i = 0; i <= ens.steps(); ++i) {
        for (std::size_t m = 0; m < ens.paths(); ++m) {
            sup_err = std::max(sup_err, std::abs(cp.A(i, m) - rate * ens.grid().time(i)));
        }
    }
    const double rel = sup_err / rate;
    const double bound = 2.0 * cp.drift();
    double top = 0.0;
    for (const auto& run : res.runs) {
        for (double a : run.A.row(ens.steps())) {
            top = std::max(top, a);
        }
    }
    const double secs = seconds_since(t0);
    return {rel <= 0.05 && top <= bound + 1e-9 && res.runs.back().n == 64.0 && secs <= 600.0,
            "sup |A - 2.5 t| / 2.5 = " + fmt(rel, 3) + " (<= 0.05); max A^n_T " + fmt(top, 5) + " <= " +
                fmt(bound) + "; " + fmt(secs, 3) + " s"};
}

Verdict ac11() {
    const PathEnsemble ens = simulate_brownian(make_grid(1.0, 64), 1, 8192, 17);
    const Regressor reg(ens, RegressionBasis::piecewise_local(32));
    const auto op = make_operator("entropic:1");
    Field Y = op->evaluate_all(functional_terminal(ens, [](auto b) { return std::cos(b[0]); }, 1.0), reg);
    for (std::size_t i = 0; i <= ens.steps(); ++i) {
        for (std::size_t m = 0; m < ens.paths(); ++m) {
            Y(i, m) += 0.5 * ens.grid().time(i);
        }
    }
    const auto res = doob_meyer_decompose(Y, {}, op, reg);
    std::size_t ok = 0, total = 0;
    const double tol = 1e-9;
    for (std::size_t k = 0; k < res.runs.size(); ++k) {
        const Field& lower = k + 1 < res.runs.size() ? res.runs[k + 1].y : Y;
        const Field& upper = res.runs[k].y;
        for (std::size_t j = 0; j < upper.data().size(); ++j) {
            ok += upper.data()[j] >= lower.data()[j] - tol ? 1 : 0;
            ++total;
        }
    }
    const double frac = static_cast<double>(ok) / static_cast<double>(total);
    return {frac >= 0.99, "ordered y^1 >= y^2 >= ... >= y^64 >= Y at " + fmt(100.0 * frac, 5) +
                              "% of (level, path-step) pairs (>= 99%)"};
}

Verdict ac12() {
    const PathEnsemble ens = simulate_brownian(make_grid(1.0, 64), 1, 8192, 51);
    const Regressor reg(ens, RegressionBasis::piecewise_local(32));
    const double mu = 1.5;
    const auto gen = canonical_generator(mu);
    const auto times = recovery_times(1.0);
    const auto zs = recovery_zgrid(1);

    const GExpectation numerical(gen);
    const auto rec = recover_generator(numerical, reg, times, zs);
    const auto fit = fit_canonical_mu(rec);
    const auto lip = check_recovered_lipschitz(rec, 2.0 * fit.mu);

    const AffineFormulaExpectation affine(gen);
    const auto exact = recover_generator(affine, reg, times, zs);
    double worst = 0.0;
    for (std::size_t ti = 0; ti < times.size(); ++ti) {
        for (std::size_t zi = 0; zi < zs.size(); ++zi) {
            const double target = gen(times[ti], zs[zi]);
            for (double q : exact.quotients[exact.index(ti, zi)]) {
                worst = std::max(worst, std::abs(q - target));
            }
        }
    }
    std::vector<std::size_t> probes{0, ens.steps() / 2};
    const auto rep = verify_representation(numerical, canonical_generator(fit.mu), reg, representation_payoffs(),
                                           probes, 0.05);
    const bool ok = std::abs(fit.mu - mu) <= 0.05 * mu && lip.report.pass && worst <= 1e-6 && rep.lhs <= 0.05;
    return {ok, "mu-hat " + fmt(fit.mu, 8) + " (in [1.425, 1.575]); Lipschitz " + (lip.report.pass ? "pass" : "fail") +
                    "; affine formula max |q_h - g| " + fmt(worst, 3) + " (<= 1e-6); representation deviation " +
                    fmt(rep.lhs, 3) + " (<= 0.05)"};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

Verdict ac13(const fs::path& configs, const fs::path& scratch) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(configs)) {
        if (e.path().extension() == ".json") {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    std::size_t compared = 0;
    std::vector<std::string> mismatched;
    std::ostringstream log;
    for (const auto& f : files) {
        const std::string name = f.stem().string();
        std::vector<std::vector<std::string>> listings;
        for (const char* run : {"a", "b"}) {
            const fs::path out = scratch / "determinism" / name / run;
            fs::remove_all(out);
            const auto c = cli::load_config(f.string(), {"output=" + nlohmann::json(out.string()).dump()});
            listings.push_back(cli::run_experiment(c, "all", log).files);
        }
        if (listings[0] != listings[1]) {
            mismatched.push_back(name + " (file list)");
            continue;
        }
        for (const auto& file : listings[0]) {
            if (fs::path(file).extension() != ".csv") {
                continue;
            }
            ++compared;
            if (slurp(scratch / "determinism" / name / "a" / file) != slurp(scratch / "determinism" / name / "b" / file)) {
                mismatched.push_back(name + "/" + file);
            }
        }
    }
    std::string detail = std::to_string(files.size()) + " configs, " + std::to_string(compared) + " CSVs compared";
    for (const auto& m : mismatched) {
        detail += "; differs: " + m;
    }
    return {mismatched.empty() && !files.empty() && compared > 0, detail};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria AC1-AC13"};
    std::string configs = QFE_CONFIG_DIR;
    std::string scratch = (fs::temp_directory_path() / "qfe_acceptance").string();
    std::string only;
    app.add_option("--configs", configs, "directory of shipped configs (AC13)");
    app.add_option("--scratch", scratch, "working directory for AC13 runs");
    app.add_option("--only", only, "comma-separated subset, e.g. AC1,AC5");
    CLI11_PARSE(app, argc, argv);

    std::set<std::string> selected;
    std::istringstream parts(only);
    for (std::string s; std::getline(parts, s, ',');) {
        selected.insert(s);
    }
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"AC1", ac1},   {"AC2", ac2},   {"AC3", ac3},   {"AC4", ac4},   {"AC5", ac5},
        {"AC6", ac6},   {"AC7", ac7},   {"AC8", ac8},   {"AC9", ac9},   {"AC10", ac10},
        {"AC11", ac11}, {"AC12", ac12}, {"AC13", [&] { return ac13(configs, scratch); }},
    };
    bool all = true;
    for (const auto& [id, fn] : criteria) {
        if (!selected.empty() && !selected.count(id)) {
            continue;
        }
        const auto t0 = Clock::now();
        Verdict v;
        try {
            v = fn();
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        all = all && v.pass;
        std::cout << id << ' ' << (v.pass ? "PASS" : "FAIL") << "  " << v.detail << "  [" << fmt(seconds_since(t0), 3)
                  << " s]" << std::endl;
    }
    return all ? 0 : 1;
}
