#include <filesystem>
#include <fstream>
#include <sstream>

#include <catch_amalgamated.hpp>

#include "qfe/cli/config.hpp"
#include "qfe/cli/manifest.hpp"
#include "qfe/cli/plot.hpp"
#include "qfe/cli/runner.hpp"
#include "qfe/core/errors.hpp"

using namespace qfe;
using namespace qfe::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json minimal() {
    return json::parse(R"({
        "schema_version": 1,
        "grid": {"T": 1.0, "N": 10},
        "ensemble": {"d": 1, "M": 64, "seed": 3}
    })");
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::path(QFE_SCRATCH) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace

TEST_CASE("sha256 matches published test vectors", "[cli]") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("config round trip is idempotent for every shipped config", "[cli]") {
    std::vector<fs::path> files;
    for (const auto& dir : {fs::path(QFE_CONFIG_DIR), fs::path(QFE_TEST_DATA)}) {
        for (const auto& e : fs::directory_iterator(dir)) {
            if (e.path().extension() == ".json" && e.path().stem() != "unknown_generator") {
                files.push_back(e.path());
            }
        }
    }
    REQUIRE(files.size() >= 8);
    for (const auto& f : files) {
        INFO(f.string());
        const ExperimentConfig c = load_config(f.string());
        const json once = to_json(c);
        const json twice = to_json(parse_config(once));
        CHECK(once == twice);
        CHECK(once.dump() == twice.dump());
    }
}

TEST_CASE("defaults are filled in and serialized", "[cli]") {
    const auto c = parse_config(minimal());
    CHECK(c.seed == 3);
    CHECK(c.basis == "piecewise_local");
    CHECK(c.op.generator.kind == "entropic");
    CHECK_FALSE(c.solve.has_value());
    const json j = to_json(c);
    CHECK(j.at("operator").at("evaluation") == "numerical");
    CHECK_FALSE(j.contains("solve"));
}

TEST_CASE("config parsing is strict", "[cli]") {
    auto rejects = [](json j) { CHECK_THROWS_AS(parse_config(j), ConfigError); };
    {
        json j = minimal();
        j["colour"] = "blue";
        rejects(j);
    }
    {
        json j = minimal();
        j["grid"]["dt"] = 0.1;
        rejects(j);
    }
    {
        json j = minimal();
        j["ensemble"].erase("seed");
        rejects(j);
    }
    {
        json j = minimal();
        j.erase("grid");
        rejects(j);
    }
    {
        json j = minimal();
        j["schema_version"] = 2;
        rejects(j);
    }
    {
        json j = minimal();
        j["grid"]["N"] = -3;
        rejects(j);
    }
    {
        json j = minimal();
        j["grid"]["N"] = "ten";
        rejects(j);
    }
    {
        json j = minimal();
        j["operator"] = {{"generator", {{"kind", "cubic"}}}};
        rejects(j);
    }
    {
        json j = minimal();
        j["operator"] = {{"generator", {{"kind", "canonical"}, {"params", json::object()}}}};
        rejects(j);
    }
    {
        json j = minimal();
        j["operator"] = {{"fault", {{"kind", "gremlin"}}}};
        rejects(j);
    }
    {
        json j = minimal();
        j["domination"] = {{"checks", {"linf", "vibes"}}};
        rejects(j);
    }
    {
        json j = minimal();
        j["solve"] = {{"payoff", {{"expression", "cos(("}}}};
        rejects(j);
    }
    {
        json j = minimal();
        j["acceptance"] = {{"recover_mu_interval", {2.0, 1.0}}};
        rejects(j);
    }
}

TEST_CASE("overrides follow dotted paths", "[cli]") {
    json j = minimal();
    apply_override(j, "grid.N=64");
    CHECK(j["grid"]["N"] == 64);
    apply_override(j, "operator.generator={\"kind\":\"canonical\",\"params\":{\"mu\":1.5}}");
    CHECK(j["operator"]["generator"]["params"]["mu"] == 1.5);
    apply_override(j, "output=runs/a b");
    CHECK(j["output"] == "runs/a b");
    apply_override(j, "solve.payoff.expression=tanh(z)");
    CHECK(j["solve"]["payoff"]["expression"] == "tanh(z)");
    const auto c = parse_config(j);
    CHECK(c.N == 64);
    CHECK(c.solve->payoff.expression == "tanh(z)");
    CHECK_THROWS_AS(apply_override(j, "no_equals_sign"), ConfigError);
    CHECK_THROWS_AS(apply_override(j, "grid..N=3"), ConfigError);
    CHECK_THROWS_AS(apply_override(j, "grid.N.x=3"), ConfigError);
}

TEST_CASE("configured payoffs and operators", "[cli]") {
    auto c = parse_config(minimal());
    const PathEnsemble ens = simulate_brownian(make_grid(1.0, 10), 1, 64, 3);
    const auto xi = payoff_at({"2 * z", 0.5}, ens, StoppingTime::constant(64, 10));
    for (std::size_t m = 0; m < 64; ++m) {
        CHECK(xi.base[m] == std::clamp(2.0 * ens.value(10, m)[0], -0.5, 0.5));
    }
    CHECK(make_config_operator(c, "")->describe() == "g-expectation(entropic(gamma=1))");
    c.op.fault = "bias";
    c.op.fault_magnitude = 0.1;
    CHECK(make_config_operator(c, "")->describe().find("bias") != std::string::npos);
    c.op.fault = "none";
    c.op.generator = {"linear", {}, ""};
    CHECK(make_config_operator(c, "")->describe() == "linear");
}

TEST_CASE("CSV reader honours quotes", "[cli]") {
    const auto dir = scratch("csv");
    std::ofstream(dir / "t.csv") << "a,b,c\n1,\"x, \"\"y\"\"\",3\n";
    const auto t = read_csv_table(dir / "t.csv");
    REQUIRE(t.rows.size() == 1);
    CHECK(t.rows[0][1] == "x, \"y\"");
    CHECK(t.column("c") == 2);
    CHECK_THROWS_AS(t.column("d"), ConfigError);
}

TEST_CASE("plots: empty CSV is a no-op with a warning", "[cli]") {
    const auto dir = scratch("plots_empty");
    std::ofstream(dir / "convergence.csv") << "N,M,y0,oracle_y0,oracle_se,rel_error,clipped\n";
    std::ostringstream warn;
    const auto written = emit_plots(dir, warn);
    CHECK(written.empty());
    CHECK(warn.str().find("convergence.csv") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "y0_vs_N.svg"));
}

TEST_CASE("plots: schema mismatch is an error", "[cli]") {
    const auto dir = scratch("plots_bad");
    std::ofstream(dir / "decomposition.csv") << "level,value\n1,2\n";
    std::ostringstream warn;
    CHECK_THROWS_AS(emit_plots(dir, warn), ConfigError);
}

TEST_CASE("plots: three images with deterministic bytes", "[cli]") {
    const auto dir = scratch("plots_ok");
    std::ofstream(dir / "convergence.csv") << "N,M,y0,oracle_y0,oracle_se,rel_error,clipped\n"
                                              "10,100,0.61,0.62,0.01,0.016,0\n50,100,0.619,0.62,0.01,0.002,0\n";
    std::ofstream(dir / "decomposition.csv")
        << "n,sup_gap,mean_A_T,martingale_residual,iterations,patches\n1,0.5,0.9,,3,1\n2,0.3,1.4,,3,1\nlimit,,2.5,0.01,,\n";
    std::ofstream(dir / "recovery.csv") << "t,z1,g,se,spread,converged,q_h0.5\n0,-1,0.5,0,0,1,0.5\n0,0,0,0,0,1,0\n"
                                           "0,1,0.5,0,0,1,0.5\n0.5,-1,0.6,0,0,1,0.6\n0.5,1,0.6,0,0,1,0.6\n";
    std::ostringstream warn;
    const auto written = emit_plots(dir, warn);
    CHECK(written == std::vector<std::string>{"y0_vs_N.svg", "compensator_vs_n.svg", "generator_vs_z.svg"});
    CHECK(warn.str().empty());
    const std::string first = slurp(dir / "generator_vs_z.svg");
    CHECK(first.find("t = 0.5") != std::string::npos);
    emit_plots(dir, warn);
    CHECK(slurp(dir / "generator_vs_z.svg") == first);
    CHECK(render_svg("x", "a", "b", {{"s", {0, 1}, {1, 2}}}) == render_svg("x", "a", "b", {{"s", {0, 1}, {1, 2}}}));
}

TEST_CASE("a run is reproducible byte for byte", "[cli]") {
    const std::string cfg = std::string(QFE_TEST_DATA) + "/small_ok.json";
    const auto a = scratch("run_a");
    const auto b = scratch("run_b");
    std::ostringstream log;
    const auto ra = run_experiment(load_config(cfg, {"output=" + json(a.string()).dump()}), "all", log);
    const auto rb = run_experiment(load_config(cfg, {"output=" + json(b.string()).dump(), "threads=2"}), "all", log);
    CHECK(ra.exit_code == kOk);
    CHECK(rb.exit_code == kOk);
    REQUIRE(ra.files == rb.files);
    for (const char* f : {"convergence.csv", "solution.csv", "decomposition.csv", "compensator.csv", "recovery.csv",
                          "mu_fit.csv", "assertions.csv", "paths.csv", "y0_vs_N.svg", "generator_vs_z.svg"}) {
        INFO(f);
        CHECK(std::find(ra.files.begin(), ra.files.end(), f) != ra.files.end());
    }
    for (const auto& f : ra.files) {
        INFO(f);
        if (f != "config.resolved.json") {
            CHECK(slurp(a / f) == slurp(b / f));
        }
    }
    const json ma = json::parse(slurp(a / "manifest.json"));
    const json mb = json::parse(slurp(b / "manifest.json"));
    CHECK(ma.at("config_hash") == mb.at("config_hash"));
    CHECK(ma.at("files").size() == ra.files.size());
    for (const auto& e : ma.at("files")) {
        CHECK(e.at("sha256") == sha256_file(a / e.at("path").get<std::string>()));
    }
    // The resolved config parses back to the same experiment.
    const auto resolved = load_config((a / "config.resolved.json").string());
    CHECK(to_json(resolved) == to_json(load_config(cfg, {"output=" + json(a.string()).dump()})));
}

TEST_CASE("a failing assertion gives exit code 1", "[cli]") {
    const auto dir = scratch("run_fault");
    std::ostringstream log;
    const auto r = run_experiment(
        load_config(std::string(QFE_TEST_DATA) + "/faulty_small.json", {"output=" + json(dir.string()).dump()}),
        "axioms", log);
    CHECK(r.exit_code == kAssertionFailed);
    REQUIRE(r.assertions.size() == 1);
    CHECK_FALSE(r.assertions[0].pass);
    CHECK(slurp(dir / "assertions.csv").find("axioms_all_pass,false") != std::string::npos);
}

TEST_CASE("exceptions map onto exit codes", "[cli]") {
    auto code = [](auto thrower) {
        std::ostringstream err;
        try {
            thrower();
        } catch (...) {
            return exit_code_for_current_exception(err);
        }
        return -1;
    };
    CHECK(code([] { throw ConfigError("x"); }) == kConfigError);
    CHECK(code([] { throw std::invalid_argument("x"); }) == kConfigError);
    CHECK(code([] { throw NonConvergenceError("x", 1.0); }) == kNumericalError);
    CHECK(code([] { throw DivergenceError("x"); }) == kNumericalError);
    CHECK(code([] { throw DegenerateBasisError("x"); }) == kNumericalError);
    std::ostringstream log;
    CHECK_THROWS_AS(run_experiment(parse_config(minimal()), "dance", log), ConfigError);
}
