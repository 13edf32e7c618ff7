#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qfe/axioms/harness.hpp"
#include "qfe/axioms/operator.hpp"
#include "qfe/core/regression.hpp"
#include "qfe/generators/generator.hpp"

namespace qfe::cli {

inline constexpr int kSchemaVersion = 1;

// phi(B_tau) with phi an expression in z1..zd (z aliases z1), clipped to [-bound, bound].
struct PayoffConfig {
    std::string expression = "cos(z)";
    double bound = 1.0;
};

struct OperatorConfig {
    GeneratorSpec generator{"entropic", {{"gamma", 1.0}}, ""};
    // numerical | affine_formula | external
    std::string evaluation = "numerical";
    // Shell command for external evaluation.
    std::string command;
    // none | bias | state_bias | state_scale | future_peek
    std::string fault = "none";
    double fault_magnitude = 0.0;
};

struct BootstrapConfig {
    std::size_t resamples = 200;
    std::uint64_t seed = 20240611;
    double relative_floor = 1e-6;
    double max_fail_fraction = 0.01;
};

struct SimulateConfig {
    // Leading paths written to paths.csv; 0 writes none.
    std::size_t export_paths = 256;
};

struct SolveConfig {
    PayoffConfig payoff{};
    // Cole-Hopf comparison; entropic generators only.
    bool oracle = true;
    // Extra grid sizes for the Y_0 convergence table.
    std::vector<std::size_t> convergence_N;
    bool write_paths = false;
};

struct AxiomsConfig {
    BootstrapConfig bootstrap{};
};

struct DominationConfig {
    // bmo_bound | energy | lp | linf | one_sided | demo
    std::vector<std::string> checks{"bmo_bound", "energy", "linf", "demo"};
    PayoffConfig xi1{"tanh(z)", 1.0};
    PayoffConfig xi2{"0", 1.0};
    PayoffConfig eta{"0.5 * tanh(z)", 1.0};
    std::vector<double> z{1.0};
    // First exit of |B^1| from this level; unset means tau = T.
    std::optional<double> tau_level;
    double K = 1.0;
    double R = 1.0;
    double J = 10.0;
    // Bound on |d^2 g / dz^2|; unset means the generator's growth constant.
    std::optional<double> ell2;
    std::vector<unsigned> energy_moments{1, 2, 3};
    double demo_a = 1.0;
    double demo_b = 1.0;
    BootstrapConfig bootstrap{40, 20240611, 1e-6, 0.01};
};

struct DecomposeConfig {
    std::vector<double> z{1.0};
    double ell = 1.0;
    std::vector<double> schedule{1, 2, 4, 8, 16, 32, 64};
    double fixed_point_tol = 1e-10;
    std::size_t fixed_point_max_iter = 200;
};

struct RecoverConfig {
    // Empty means 0, T/4, T/2, 3T/4.
    std::vector<double> times;
    std::size_t zgrid_points = 9;
    double zgrid_radius = 3.0;
    std::vector<double> h_fractions{1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0};
    std::optional<bool> time_homogeneous;
    double puncture = 0.05;
    // Lipschitz constant for the recovered surface; unset means 2 mu-hat.
    std::optional<double> ell;
    bool representation = true;
    // Steps probed by the representation check; empty means 0 and N/2.
    std::vector<std::size_t> probes;
    double representation_tolerance = 0.05;
};

// Hard assertions; each is checked only when present.
struct AcceptanceConfig {
    std::optional<double> solve_oracle_rel_error_max;
    std::optional<std::vector<double>> solve_y0_interval;
    std::optional<bool> axioms_all_pass;
    std::optional<bool> domination_all_pass;
    std::optional<double> decompose_compensator_rel_error_max;
    std::optional<bool> decompose_levels_bounded;
    std::optional<std::vector<double>> recover_mu_interval;
    std::optional<bool> recover_lipschitz_pass;
    std::optional<double> recover_representation_deviation_max;
};

struct ExperimentConfig {
    int schema_version = kSchemaVersion;
    std::string name = "experiment";
    double T = 1.0;
    std::size_t N = 50;
    std::size_t d = 1;
    std::size_t M = 4096;
    std::uint64_t seed = 0;
    // piecewise_local | polynomial; size is bins or degree.
    std::string basis = "piecewise_local";
    std::size_t basis_size = 32;
    std::size_t threads = 1;
    std::string output = "out";
    OperatorConfig op{};
    std::optional<SimulateConfig> simulate;
    std::optional<SolveConfig> solve;
    std::optional<AxiomsConfig> axioms;
    std::optional<DominationConfig> domination;
    std::optional<DecomposeConfig> decompose;
    std::optional<RecoverConfig> recover;
    AcceptanceConfig acceptance{};
};

// Strict: unknown keys, a missing seed, a schema mismatch or an unresolvable
// kind raise ConfigError.
ExperimentConfig parse_config(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& c);

// KEY is a dotted path into the JSON document; VAL is parsed as JSON and
// taken as a string when that fails. Intermediate objects are created.
void apply_override(nlohmann::json& j, const std::string& assignment);

nlohmann::json read_json_file(const std::string& path);
ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});

RegressionBasis make_basis(const ExperimentConfig& c);
Generator make_config_generator(const ExperimentConfig& c);
// Operator from the config, fault applied. scratch_dir is used by external evaluation.
OperatorPtr make_config_operator(const ExperimentConfig& c, const std::string& scratch_dir);
Payoff make_payoff(const PayoffConfig& p, std::size_t dim);
// The payoff evaluated at B_tau, with known_from = tau.
TerminalCondition payoff_at(const PayoffConfig& p, const PathEnsemble& ens, const StoppingTime& tau);
BootstrapOptions make_bootstrap(const BootstrapConfig& b, std::size_t threads);

}  // namespace qfe::cli
