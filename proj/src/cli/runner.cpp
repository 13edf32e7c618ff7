#include "qfe/cli/runner.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <ostream>
#include <sstream>

#include "qfe/bmo/bmo.hpp"
#include "qfe/bmo/domination.hpp"
#include "qfe/bsde/solver.hpp"
#include "qfe/cli/manifest.hpp"
#include "qfe/cli/plot.hpp"
#include "qfe/core/errors.hpp"
#include "qfe/core/statistics.hpp"
#include "qfe/representation/representation.hpp"

#ifndef QFE_VERSION
#define QFE_VERSION "0.0.0"
#endif

namespace qfe::cli {

namespace fs = std::filesystem;

namespace {

class Runner {
public:
    Runner(const ExperimentConfig& c, std::ostream& log)
        : c_(c),
          log_(log),
          out_(c.output),
          ens_(simulate_brownian(make_grid(c.T, c.N), c.d, c.M, c.seed)),
          reg_(ens_, make_basis(c)),
          gen_(make_config_generator(c)) {}

    void simulate(const SimulateConfig& s) {
        log_ << "simulate: d=" << c_.d << " N=" << c_.N << " M=" << c_.M << " seed=" << c_.seed << '\n';
        auto out = open("ensemble_summary.csv");
        out << "i,t";
        for (std::size_t k = 1; k <= c_.d; ++k) {
            out << ",mean_B" << k << ",var_B" << k;
        }
        out << '\n' << std::setprecision(17);
        std::vector<double> comp(c_.M);
        for (std::size_t i = 0; i <= c_.N; ++i) {
            out << i << ',' << ens_.grid().time(i);
            for (std::size_t k = 0; k < c_.d; ++k) {
                for (std::size_t m = 0; m < c_.M; ++m) {
                    comp[m] = ens_.value(i, m)[k];
                }
                out << ',' << mean(comp) << ',' << variance(comp);
            }
            out << '\n';
        }
        if (s.export_paths > 0) {
            std::vector<std::size_t> idx(std::min(s.export_paths, c_.M));
            for (std::size_t m = 0; m < idx.size(); ++m) {
                idx[m] = m;
            }
            auto paths = open("paths.csv");
            ens_.resampled(idx).write_csv(paths);
        }
    }

    void solve(const SolveConfig& s) {
        std::vector<std::size_t> sizes = s.convergence_N;
        sizes.push_back(c_.N);
        std::sort(sizes.begin(), sizes.end());
        sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());
        const bool oracle = s.oracle && gen_.kind() == Generator::Kind::entropic;
        const double gamma = oracle ? c_.op.generator.params.at("gamma") : 0.0;

        auto conv = open("convergence.csv");
        conv << "N,M,y0,oracle_y0,oracle_se,rel_error,clipped\n" << std::setprecision(17);
        for (std::size_t n : sizes) {
            log_ << "solve: " << gen_.describe() << " payoff " << s.payoff.expression << " N=" << n << '\n';
            const bool main = n == c_.N;
            std::optional<PathEnsemble> own;
            std::optional<Regressor> own_reg;
            if (!main) {
                own.emplace(simulate_brownian(make_grid(c_.T, n), c_.d, c_.M, c_.seed));
                own_reg.emplace(*own, make_basis(c_));
            }
            const PathEnsemble& ens = main ? ens_ : *own;
            const Regressor& reg = main ? reg_ : *own_reg;
            const auto xi = payoff_at(s.payoff, ens, StoppingTime::constant(ens.paths(), ens.steps()));
            BsdeSolution sol = solve_bsde(xi, gen_, reg);
            const double y0 = mean(sol.Y.row(0));
            conv << n << ',' << c_.M << ',' << y0;
            if (oracle) {
                const auto ch = cole_hopf_oracle(gamma, xi, reg);
                const double o = mean(ch.Y.row(0));
                const double rel = std::abs(y0 - o) / std::max(std::abs(o), 1e-300);
                conv << ',' << o << ',' << ch.y0_standard_error << ',' << rel;
                if (main) {
                    oracle_rel_ = rel;
                }
            } else {
                conv << ",,,";
            }
            conv << ',' << sol.clipped << '\n';
            if (main) {
                y0_ = y0;
                auto sol_out = open("solution.csv");
                write_solution_csv(sol_out, sol);
                if (s.write_paths) {
                    auto p = open("solution_paths.csv");
                    write_solution_paths_csv(p, sol);
                }
                solution_ = std::make_unique<BsdeSolution>(std::move(sol));
            }
        }
        const auto& a = c_.acceptance;
        if (a.solve_oracle_rel_error_max) {
            const bool have = oracle_rel_.has_value();
            assertions_.push_back({"solve_oracle_rel_error", have && *oracle_rel_ <= *a.solve_oracle_rel_error_max,
                                   have ? *oracle_rel_ : std::nan(""),
                                   "<= " + num(*a.solve_oracle_rel_error_max)});
        }
        if (a.solve_y0_interval) {
            const auto& iv = *a.solve_y0_interval;
            assertions_.push_back({"solve_y0", y0_ >= iv[0] && y0_ <= iv[1], y0_,
                                   "in [" + num(iv[0]) + ", " + num(iv[1]) + "]"});
        }
    }

    void axioms(const AxiomsConfig& s) {
        const auto op = make_config_operator(c_, scratch());
        log_ << "axioms: " << op->describe() << " resamples=" << s.bootstrap.resamples << '\n';
        const auto reports = run_axiom_battery(*op, reg_, make_bootstrap(s.bootstrap, c_.threads));
        auto out = open("axioms.csv");
        write_axiom_csv(out, reports);
        std::size_t passed = 0;
        for (const auto& r : reports) {
            log_ << "  " << summary(r) << '\n';
            passed += r.pass ? 1 : 0;
        }
        if (c_.acceptance.axioms_all_pass) {
            const bool want = *c_.acceptance.axioms_all_pass;
            const bool all = passed == reports.size();
            assertions_.push_back({"axioms_all_pass", all == want, static_cast<double>(passed),
                                   want ? "all " + std::to_string(reports.size()) + " pass"
                                        : "at least one failure"});
        }
    }

    void domination(const DominationConfig& s) {
        const auto op = make_config_operator(c_, scratch());
        const auto opts = make_bootstrap(s.bootstrap, c_.threads);
        const double ell2 = s.ell2.value_or(gen_.growth());
        const auto constants = domination_constants(s.K, s.R, gen_.growth(), s.J, ell2);
        const std::optional<double> level = s.tau_level;
        const StoppingRule tau = [level](const PathEnsemble& ens) {
            return level ? first_hitting_time(ens, 0, *level) : StoppingTime::constant(ens.paths(), ens.steps());
        };
        auto stopped = [&tau](const PayoffConfig& p) -> Payoff {
            return [p, tau](const PathEnsemble& ens) { return payoff_at(p, ens, tau(ens)); };
        };
        std::vector<InequalityReport> reports;
        std::optional<BmoEstimate> bmo;
        for (const auto& check : s.checks) {
            log_ << "domination: " << check << '\n';
            if (check == "bmo_bound" || check == "energy") {
                const BsdeSolution& sol = solution();
                if (check == "bmo_bound") {
                    reports.push_back(bmo_bound_from_solution(sol, std::max(gen_.growth(), 0.5), reg_));
                } else {
                    if (!bmo) {
                        bmo = bmo_norm(sol.Z, reg_, default_bmo_hitting(ens_));
                    }
                    for (unsigned n : s.energy_moments) {
                        reports.push_back(check_energy_inequality(sol.Z, ens_.grid(), n, *bmo));
                    }
                }
            } else if (check == "lp") {
                const auto tau1 = StoppingTime::constant(ens_.paths(), ens_.steps());
                const auto tau2 = tau(ens_);
                reports.push_back(check_lp_domination(*op, payoff_at(s.xi1, ens_, tau1).base, tau1,
                                                      payoff_at(s.xi2, ens_, tau2).base, tau2, s.z, constants,
                                                      reg_));
            } else if (check == "linf") {
                reports.push_back(check_linf_domination(*op, stopped(s.xi1), stopped(s.xi2), tau, s.z, reg_, opts));
            } else if (check == "one_sided") {
                reports.push_back(
                    check_one_sided_domination(*op, stopped(s.xi1), stopped(s.eta), s.z, tau, constants, reg_, opts));
            } else if (check == "demo") {
                reports.push_back(domination_failure_demo(s.demo_a, s.demo_b, ens_));
            }
            const auto& r = reports.back();
            log_ << "  " << r.check << ": " << (r.pass ? "PASS" : "FAIL") << " lhs=" << r.lhs << " rhs=" << r.rhs
                 << '\n';
        }
        auto out = open("domination.csv");
        write_inequality_csv(out, reports);
        if (c_.acceptance.domination_all_pass) {
            const bool want = *c_.acceptance.domination_all_pass;
            const auto passed = static_cast<std::size_t>(
                std::count_if(reports.begin(), reports.end(), [](const auto& r) { return r.pass; }));
            assertions_.push_back({"domination_all_pass", (passed == reports.size()) == want,
                                   static_cast<double>(passed),
                                   want ? "all " + std::to_string(reports.size()) + " pass"
                                        : "at least one failure"});
        }
    }

    void decompose(const DecomposeConfig& s) {
        const auto op = make_config_operator(c_, scratch());
        log_ << "decompose: canonical process under " << op->describe() << '\n';
        DecompositionOptions opts;
        opts.schedule = s.schedule;
        opts.fixed_point.tol = s.fixed_point_tol;
        opts.fixed_point.max_iter = s.fixed_point_max_iter;
        opts.threads = c_.threads;
        auto cp = canonical_process(s.z, s.ell, ens_);
        const auto res = decompose_canonical(cp, op, reg_, opts);
        {
            auto out = open("decomposition.csv");
            write_decomposition_csv(out, res);
        }
        // The compensator the declared generator implies: int_0^t g(s, z) ds + drift t.
        const bool declared = c_.op.evaluation != "external";
        auto out = open("compensator.csv");
        out << "i,t,mean_A,expected_A\n" << std::setprecision(17);
        double sup_err = 0.0, sup_exp = 0.0;
        for (std::size_t i = 0; i <= c_.N; ++i) {
            const double t = ens_.grid().time(i);
            const double a = mean(cp.A.row(i));
            out << i << ',' << t << ',' << a << ',';
            if (declared) {
                const double e = integrate_driver(gen_, s.z, 0.0, t) + cp.drift() * t;
                out << e;
                sup_err = std::max(sup_err, std::abs(a - e));
                sup_exp = std::max(sup_exp, std::abs(e));
            }
            out << '\n';
        }
        const double bound = 2.0 * cp.drift() * c_.T;
        double top = -std::numeric_limits<double>::infinity();
        for (const auto& run : res.runs) {
            for (double a : run.A.row(c_.N)) {
                top = std::max(top, a);
            }
        }
        const auto& a = c_.acceptance;
        if (a.decompose_compensator_rel_error_max) {
            const double rel = declared && sup_exp > 0.0 ? sup_err / sup_exp : std::nan("");
            assertions_.push_back({"decompose_compensator_rel_error", rel <= *a.decompose_compensator_rel_error_max,
                                   rel, "<= " + num(*a.decompose_compensator_rel_error_max)});
        }
        if (a.decompose_levels_bounded) {
            const bool ok = top <= bound + 1e-9 * std::max(1.0, bound);
            assertions_.push_back({"decompose_levels_bounded", ok == *a.decompose_levels_bounded, top,
                                   (*a.decompose_levels_bounded ? "<= " : "> ") + num(bound)});
        }
    }

    void recover(const RecoverConfig& s) {
        const auto op = make_config_operator(c_, scratch());
        log_ << "recover: " << op->describe() << '\n';
        RecoveryOptions opts;
        opts.h_fractions = s.h_fractions;
        opts.time_homogeneous = s.time_homogeneous;
        opts.threads = c_.threads;
        const auto times = s.times.empty() ? recovery_times(c_.T) : s.times;
        const auto rec = recover_generator(*op, reg_, times, tensor_grid(c_.d, s.zgrid_radius, s.zgrid_points), opts);
        const auto fit = fit_canonical_mu(rec, s.puncture);
        log_ << "  mu-hat " << fit.mu << " residual " << fit.residual << (fit.canonical ? "" : " (not canonical)")
             << '\n';
        {
            auto out = open("recovery.csv");
            write_recovery_csv(out, rec);
            auto f = open("mu_fit.csv");
            write_mu_fit_csv(f, fit);
        }
        std::vector<InequalityReport> checks;
        const auto lip = check_recovered_lipschitz(rec, s.ell.value_or(2.0 * fit.mu));
        checks.push_back(lip.report);
        std::optional<double> deviation;
        if (s.representation) {
            auto probes = s.probes;
            if (probes.empty()) {
                probes = {0, c_.N / 2};
            }
            const auto rep = verify_representation(*op, canonical_generator(fit.mu), reg_, representation_payoffs(),
                                                   probes, s.representation_tolerance);
            checks.push_back(rep);
            deviation = rep.lhs;
        }
        auto out = open("recovery_checks.csv");
        write_inequality_csv(out, checks);
        const auto& a = c_.acceptance;
        if (a.recover_mu_interval) {
            const auto& iv = *a.recover_mu_interval;
            assertions_.push_back({"recover_mu", fit.mu >= iv[0] && fit.mu <= iv[1], fit.mu,
                                   "in [" + num(iv[0]) + ", " + num(iv[1]) + "]"});
        }
        if (a.recover_lipschitz_pass) {
            assertions_.push_back({"recover_lipschitz", lip.report.pass == *a.recover_lipschitz_pass,
                                   lip.report.lhs, *a.recover_lipschitz_pass ? "pass" : "fail"});
        }
        if (a.recover_representation_deviation_max) {
            const bool have = deviation.has_value();
            assertions_.push_back({"recover_representation_deviation",
                                   have && *deviation <= *a.recover_representation_deviation_max,
                                   have ? *deviation : std::nan(""),
                                   "<= " + num(*a.recover_representation_deviation_max)});
        }
    }

    RunResult finish(const std::string& subcommand, const std::string& started) {
        {
            auto out = open("assertions.csv");
            out << "assertion,pass,value,expected\n" << std::setprecision(17);
            for (const auto& a : assertions_) {
                out << a.name << ',' << (a.pass ? "true" : "false") << ',' << a.value << ",\"" << a.expected
                    << "\"\n";
            }
        }
        for (const auto& f : emit_plots(out_, log_)) {
            files_.push_back(f);
        }
        const auto resolved = to_json(c_).dump(2) + "\n";
        {
            std::ofstream out(out_ / "config.resolved.json", std::ios::binary);
            out << resolved;
        }
        files_.push_back("config.resolved.json");
        std::sort(files_.begin(), files_.end());
        files_.erase(std::unique(files_.begin(), files_.end()), files_.end());

        RunResult result;
        result.assertions = assertions_;
        result.files = files_;
        result.exit_code = std::all_of(assertions_.begin(), assertions_.end(), [](const auto& a) { return a.pass; })
                               ? kOk
                               : kAssertionFailed;
        for (const auto& a : assertions_) {
            log_ << "assert " << a.name << ": " << (a.pass ? "PASS" : "FAIL") << " (" << a.value << ", expected "
                 << a.expected << ")\n";
        }
        RunManifest m;
        // Output location and thread count do not change any result.
        auto hashed = to_json(c_);
        hashed.erase("output");
        hashed.erase("threads");
        m.config_hash = sha256_hex(hashed.dump());
        m.version = QFE_VERSION;
        m.subcommand = subcommand;
        m.started = started;
        m.finished = utc_now();
        m.exit_code = result.exit_code;
        m.files = files_;
        write_manifest(m, out_);
        return result;
    }

private:
    std::ofstream open(const std::string& name) {
        std::ofstream out(out_ / name, std::ios::binary);
        if (!out) {
            throw ConfigError("cannot write " + (out_ / name).string());
        }
        files_.push_back(name);
        return out;
    }

    std::string scratch() const { return (out_ / "scratch").string(); }

    static std::string num(double v) {
        std::ostringstream os;
        os << v;
        return os.str();
    }

    const BsdeSolution& solution() {
        if (!solution_) {
            SolveConfig s;
            if (c_.solve) {
                s = *c_.solve;
            }
            const auto xi = payoff_at(s.payoff, ens_, StoppingTime::constant(ens_.paths(), ens_.steps()));
            solution_ = std::make_unique<BsdeSolution>(solve_bsde(xi, gen_, reg_));
        }
        return *solution_;
    }

    const ExperimentConfig& c_;
    std::ostream& log_;
    fs::path out_;
    PathEnsemble ens_;
    Regressor reg_;
    Generator gen_;
    std::unique_ptr<BsdeSolution> solution_;
    std::optional<double> oracle_rel_;
    double y0_ = 0.0;
    std::vector<Assertion> assertions_;
    std::vector<std::string> files_;
};

}  // namespace

const std::vector<std::string>& subcommands() {
    static const std::vector<std::string> names{"simulate", "solve",     "axioms", "domination",
                                                "decompose", "recover", "all"};
    return names;
}

RunResult run_experiment(const ExperimentConfig& c, const std::string& subcommand, std::ostream& log) {
    const auto& names = subcommands();
    if (std::find(names.begin(), names.end(), subcommand) == names.end()) {
        throw ConfigError("unknown subcommand '" + subcommand + "'");
    }
    const std::string started = utc_now();
    std::error_code ec;
    fs::create_directories(c.output, ec);
    if (ec || !fs::is_directory(c.output)) {
        throw ConfigError("cannot create output directory '" + c.output + "'");
    }
    Runner r(c, log);
    const bool all = subcommand == "all";
    auto wants = [&](const std::string& name, bool present) { return all ? present : subcommand == name; };
    if (wants("simulate", c.simulate.has_value())) {
        r.simulate(c.simulate.value_or(SimulateConfig{}));
    }
    if (wants("solve", c.solve.has_value())) {
        r.solve(c.solve.value_or(SolveConfig{}));
    }
    if (wants("axioms", c.axioms.has_value())) {
        r.axioms(c.axioms.value_or(AxiomsConfig{}));
    }
    if (wants("domination", c.domination.has_value())) {
        r.domination(c.domination.value_or(DominationConfig{}));
    }
    if (wants("decompose", c.decompose.has_value())) {
        r.decompose(c.decompose.value_or(DecomposeConfig{}));
    }
    if (wants("recover", c.recover.has_value())) {
        r.recover(c.recover.value_or(RecoverConfig{}));
    }
    return r.finish(subcommand, started);
}

int exit_code_for_current_exception(std::ostream& err) {
    try {
        throw;
    } catch (const NonConvergenceError& e) {
        err << "error: no convergence: " << e.what() << " (last residual " << e.last_residual() << ")\n";
        return kNumericalError;
    } catch (const DivergenceError& e) {
        err << "error: divergence: " << e.what() << '\n';
        return kNumericalError;
    } catch (const DegenerateBasisError& e) {
        err << "error: degenerate regression basis: " << e.what() << '\n';
        return kNumericalError;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kConfigError;
    } catch (const nlohmann::json::exception& e) {
        err << "error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::invalid_argument& e) {
        err << "error: invalid input: " << e.what() << '\n';
        return kConfigError;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kConfigError;
    }
}

}  // namespace qfe::cli
