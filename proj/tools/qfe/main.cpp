// qfe SUBCOMMAND --config PATH [--out DIR] [--threads N] [--override KEY=VAL]...
// Exit codes: 0 ok, 1 assertion failure, 2 config or IO error, 3 numerical failure.
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qfe/cli/config.hpp"
#include "qfe/cli/plot.hpp"
#include "qfe/cli/runner.hpp"
#include "qfe/core/errors.hpp"

namespace {

struct Options {
    std::string config;
    std::string out;
    std::size_t threads = 0;
    std::vector<std::string> overrides;
    // domination
    std::string kind;
    std::optional<double> K, R;
    // recover
    std::string op;
    std::string zgrid;
    std::string tprobes;
};

std::string json_string(const std::string& s) { return nlohmann::json(s).dump(); }

// Sugar flags become overrides applied after the explicit ones.
std::vector<std::string> sugar(const Options& o) {
    std::vector<std::string> extra;
    if (!o.kind.empty()) {
        extra.push_back("domination.checks=[" + json_string(o.kind) + "]");
    }
    if (o.K) {
        extra.push_back("domination.K=" + nlohmann::json(*o.K).dump());
    }
    if (o.R) {
        extra.push_back("domination.R=" + nlohmann::json(*o.R).dump());
    }
    if (!o.op.empty()) {
        // Same grammar as make_operator: KIND or KIND:VALUE.
        const auto colon = o.op.find(':');
        const std::string kind = o.op.substr(0, colon);
        nlohmann::json gen = {{"kind", kind}, {"params", nlohmann::json::object()}};
        if (colon != std::string::npos) {
            const double v = std::stod(o.op.substr(colon + 1));
            if (kind == "canonical") {
                gen["params"]["mu"] = v;
            } else if (kind == "entropic") {
                gen["params"]["gamma"] = v;
            } else {
                throw qfe::ConfigError("--op '" + o.op + "': only canonical and entropic take a value");
            }
        }
        extra.push_back("operator.generator=" + gen.dump());
    }
    if (!o.zgrid.empty()) {
        const auto colon = o.zgrid.find(':');
        extra.push_back("recover.zgrid_points=" + o.zgrid.substr(0, colon));
        if (colon != std::string::npos) {
            extra.push_back("recover.zgrid_radius=" + o.zgrid.substr(colon + 1));
        }
    }
    if (!o.tprobes.empty()) {
        extra.push_back("recover.times=[" + o.tprobes + "]");
    }
    return extra;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Nonlinear expectation experiments: BSDE solves, axiom checks, domination, decomposition "
                 "and generator recovery."};
    app.require_subcommand(1);
    Options o;
    std::string plot_dir;

    std::vector<CLI::App*> runs;
    for (const auto& name : qfe::cli::subcommands()) {
        auto* sub = app.add_subcommand(name, "run the " + name + " experiment" + (name == "all" ? "s" : ""));
        sub->add_option("--config", o.config, "experiment config (JSON)")->required();
        sub->add_option("--out", o.out, "output directory (overrides the config)");
        sub->add_option("--threads", o.threads, "worker threads (overrides the config)");
        sub->add_option("--override", o.overrides, "KEY=VAL with KEY a dotted config path, VAL JSON or a string");
        if (name == "domination") {
            sub->add_option("--kind", o.kind, "run only this check (bmo_bound, energy, lp, linf, one_sided, demo)");
            sub->add_option("--K", o.K, "payoff bound");
            sub->add_option("--R", o.R, "bound on |z|");
        }
        if (name == "recover") {
            sub->add_option("--op", o.op, "generator of the operator: linear, zero, canonical:MU, entropic:GAMMA");
            sub->add_option("--zgrid", o.zgrid, "POINTS[:RADIUS] per axis");
            sub->add_option("--tprobes", o.tprobes, "comma-separated probe times");
        }
        runs.push_back(sub);
    }
    auto* plot = app.add_subcommand("plot", "render plots from the CSVs in a run directory");
    plot->add_option("dir", plot_dir, "run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : qfe::cli::kConfigError;
    }

    try {
        if (plot->parsed()) {
            for (const auto& f : qfe::cli::emit_plots(plot_dir, std::cerr)) {
                std::cout << f << '\n';
            }
            return qfe::cli::kOk;
        }
        std::string subcommand;
        for (auto* sub : runs) {
            if (sub->parsed()) {
                subcommand = sub->get_name();
            }
        }
        auto overrides = o.overrides;
        for (auto& s : sugar(o)) {
            overrides.push_back(std::move(s));
        }
        if (!o.out.empty()) {
            overrides.push_back("output=" + json_string(o.out));
        }
        if (o.threads > 0) {
            overrides.push_back("threads=" + std::to_string(o.threads));
        }
        const auto config = qfe::cli::load_config(o.config, overrides);
        const auto result = qfe::cli::run_experiment(config, subcommand, std::cerr);
        std::cout << (result.exit_code == qfe::cli::kOk ? "ok" : "assertion failure") << ": " << config.output
                  << '\n';
        return result.exit_code;
    } catch (...) {
        return qfe::cli::exit_code_for_current_exception(std::cerr);
    }
}
