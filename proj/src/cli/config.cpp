#include "qfe/cli/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include "qfe/core/errors.hpp"
#include "qfe/generators/expression.hpp"

namespace qfe::cli {

namespace {

using json = nlohmann::json;

template <class T>
struct is_vector : std::false_type {};
template <class T>
struct is_vector<std::vector<T>> : std::true_type {};

// nlohmann converts -3 to a huge unsigned value; reject it instead.
template <class T>
bool fits(const json& v) {
    if constexpr (std::is_same_v<T, bool>) {
        return v.is_boolean();
    } else if constexpr (std::is_unsigned_v<T>) {
        return v.is_number_unsigned();
    } else if constexpr (std::is_arithmetic_v<T>) {
        return v.is_number();
    } else if constexpr (is_vector<T>::value) {
        return v.is_array() &&
               std::all_of(v.begin(), v.end(), [](const json& e) { return fits<typename T::value_type>(e); });
    } else {
        return true;
    }
}

// Reads members of one object and rejects any key that was never asked for.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) {
            throw ConfigError(where() + " must be an object");
        }
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key) && !j_.at(key).is_null();
    }

    template <class T>
    void get(const std::string& key, T& out) {
        if (!has(key)) {
            return;
        }
        if (!fits<T>(j_.at(key))) {
            throw ConfigError(where(key) + " has the wrong type: " + j_.at(key).dump());
        }
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(where(key) + ": " + e.what());
        }
    }

    template <class T>
    void get(const std::string& key, std::optional<T>& out) {
        if (!has(key)) {
            return;
        }
        T v{};
        get(key, v);
        out = std::move(v);
    }

    template <class T>
    void require(const std::string& key, T& out) {
        if (!has(key)) {
            throw ConfigError(where(key) + " is required");
        }
        get(key, out);
    }

    Section sub(const std::string& key) {
        if (!has(key)) {
            throw ConfigError(where(key) + " is required");
        }
        return Section(j_.at(key), where(key));
    }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (!seen_.count(key)) {
                throw ConfigError("unknown key '" + where(key) + "'");
            }
        }
    }

    std::string where(const std::string& key = "") const {
        if (key.empty()) {
            return path_.empty() ? "config" : path_;
        }
        return path_.empty() ? key : path_ + "." + key;
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void read_payoff(Section s, PayoffConfig& p) {
    s.get("expression", p.expression);
    s.get("bound", p.bound);
    s.finish();
    if (!(p.bound >= 0.0)) {
        throw ConfigError(s.where("bound") + " must be non-negative");
    }
}

json payoff_json(const PayoffConfig& p) { return {{"expression", p.expression}, {"bound", p.bound}}; }

void read_bootstrap(Section s, BootstrapConfig& b) {
    s.get("resamples", b.resamples);
    s.get("seed", b.seed);
    s.get("relative_floor", b.relative_floor);
    s.get("max_fail_fraction", b.max_fail_fraction);
    s.finish();
}

json bootstrap_json(const BootstrapConfig& b) {
    return {{"resamples", b.resamples},
            {"seed", b.seed},
            {"relative_floor", b.relative_floor},
            {"max_fail_fraction", b.max_fail_fraction}};
}

template <class T>
void put(json& j, const std::string& key, const std::optional<T>& v) {
    if (v) {
        j[key] = *v;
    }
}

const std::set<std::string> kChecks{"bmo_bound", "energy", "lp", "linf", "one_sided", "demo"};

void validate(const ExperimentConfig& c) {
    if (c.schema_version != kSchemaVersion) {
        throw ConfigError("schema_version " + std::to_string(c.schema_version) + " does not match this binary (" +
                          std::to_string(kSchemaVersion) + ")");
    }
    if (!(c.T > 0.0) || c.N == 0 || c.d == 0 || c.M < 2) {
        throw ConfigError("grid and ensemble need T > 0, N > 0, d > 0 and M >= 2");
    }
    if (c.basis != "piecewise_local" && c.basis != "polynomial") {
        throw ConfigError("unknown regression basis '" + c.basis + "'");
    }
    if (c.output.empty()) {
        throw ConfigError("output directory must not be empty");
    }
    static const std::set<std::string> evaluations{"numerical", "affine_formula", "external"};
    if (!evaluations.count(c.op.evaluation)) {
        throw ConfigError("unknown operator evaluation '" + c.op.evaluation + "'");
    }
    if (c.op.evaluation == "external" && c.op.command.empty()) {
        throw ConfigError("external evaluation needs operator.command");
    }
    static const std::set<std::string> faults{"none", "bias", "state_bias", "state_scale", "future_peek"};
    if (!faults.count(c.op.fault)) {
        throw ConfigError("unknown fault '" + c.op.fault + "'");
    }
    make_config_generator(c);
    auto check_payoff = [&](const PayoffConfig& p) {
        try {
            Expression(p.expression, c.d);
        } catch (const std::exception& e) {
            throw ConfigError("payoff '" + p.expression + "': " + e.what());
        }
    };
    if (c.solve) {
        check_payoff(c.solve->payoff);
    }
    if (c.domination) {
        for (const auto& k : c.domination->checks) {
            if (!kChecks.count(k)) {
                throw ConfigError("unknown domination check '" + k + "'");
            }
        }
        check_payoff(c.domination->xi1);
        check_payoff(c.domination->xi2);
        check_payoff(c.domination->eta);
        if (c.domination->z.size() != c.d) {
            throw ConfigError("domination.z must have d components");
        }
    }
    if (c.decompose && c.decompose->z.size() != c.d) {
        throw ConfigError("decompose.z must have d components");
    }
    auto interval = [](const std::optional<std::vector<double>>& v, const char* key) {
        if (v && (v->size() != 2 || (*v)[0] > (*v)[1])) {
            throw ConfigError(std::string("acceptance.") + key + " must be [lo, hi]");
        }
    };
    interval(c.acceptance.solve_y0_interval, "solve_y0_interval");
    interval(c.acceptance.recover_mu_interval, "recover_mu_interval");
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
    ExperimentConfig c;
    Section root(j, "");
    root.require("schema_version", c.schema_version);
    if (c.schema_version != kSchemaVersion) {
        validate(c);
    }
    root.get("name", c.name);
    {
        auto s = root.sub("grid");
        s.require("T", c.T);
        s.require("N", c.N);
        s.finish();
    }
    {
        auto s = root.sub("ensemble");
        s.require("d", c.d);
        s.require("M", c.M);
        s.require("seed", c.seed);
        s.finish();
    }
    if (root.has("regression")) {
        auto s = root.sub("regression");
        s.get("basis", c.basis);
        s.get("size", c.basis_size);
        s.finish();
    }
    root.get("threads", c.threads);
    root.get("output", c.output);
    if (root.has("operator")) {
        auto s = root.sub("operator");
        if (s.has("generator")) {
            auto g = s.sub("generator");
            c.op.generator = {};
            g.require("kind", c.op.generator.kind);
            g.get("params", c.op.generator.params);
            g.get("expression", c.op.generator.expression);
            g.finish();
        }
        s.get("evaluation", c.op.evaluation);
        s.get("command", c.op.command);
        if (s.has("fault")) {
            auto f = s.sub("fault");
            f.require("kind", c.op.fault);
            f.get("magnitude", c.op.fault_magnitude);
            f.finish();
        }
        s.finish();
    }
    if (root.has("simulate")) {
        auto s = root.sub("simulate");
        c.simulate.emplace();
        s.get("export_paths", c.simulate->export_paths);
        s.finish();
    }
    if (root.has("solve")) {
        auto s = root.sub("solve");
        auto& v = c.solve.emplace();
        if (s.has("payoff")) {
            read_payoff(s.sub("payoff"), v.payoff);
        }
        s.get("oracle", v.oracle);
        s.get("convergence_N", v.convergence_N);
        s.get("write_paths", v.write_paths);
        s.finish();
    }
    if (root.has("axioms")) {
        auto s = root.sub("axioms");
        auto& v = c.axioms.emplace();
        if (s.has("bootstrap")) {
            read_bootstrap(s.sub("bootstrap"), v.bootstrap);
        }
        s.finish();
    }
    if (root.has("domination")) {
        auto s = root.sub("domination");
        auto& v = c.domination.emplace();
        s.get("checks", v.checks);
        for (auto [key, target] : {std::pair<const char*, PayoffConfig*>{"xi1", &v.xi1},
                                   {"xi2", &v.xi2},
                                   {"eta", &v.eta}}) {
            if (s.has(key)) {
                read_payoff(s.sub(key), *target);
            }
        }
        s.get("z", v.z);
        s.get("tau_level", v.tau_level);
        s.get("K", v.K);
        s.get("R", v.R);
        s.get("J", v.J);
        s.get("ell2", v.ell2);
        s.get("energy_moments", v.energy_moments);
        s.get("demo_a", v.demo_a);
        s.get("demo_b", v.demo_b);
        if (s.has("bootstrap")) {
            read_bootstrap(s.sub("bootstrap"), v.bootstrap);
        }
        s.finish();
    }
    if (root.has("decompose")) {
        auto s = root.sub("decompose");
        auto& v = c.decompose.emplace();
        s.get("z", v.z);
        s.get("ell", v.ell);
        s.get("schedule", v.schedule);
        s.get("fixed_point_tol", v.fixed_point_tol);
        s.get("fixed_point_max_iter", v.fixed_point_max_iter);
        s.finish();
    }
    if (root.has("recover")) {
        auto s = root.sub("recover");
        auto& v = c.recover.emplace();
        s.get("times", v.times);
        s.get("zgrid_points", v.zgrid_points);
        s.get("zgrid_radius", v.zgrid_radius);
        s.get("h_fractions", v.h_fractions);
        s.get("time_homogeneous", v.time_homogeneous);
        s.get("puncture", v.puncture);
        s.get("ell", v.ell);
        s.get("representation", v.representation);
        s.get("probes", v.probes);
        s.get("representation_tolerance", v.representation_tolerance);
        s.finish();
    }
    if (root.has("acceptance")) {
        auto s = root.sub("acceptance");
        auto& a = c.acceptance;
        s.get("solve_oracle_rel_error_max", a.solve_oracle_rel_error_max);
        s.get("solve_y0_interval", a.solve_y0_interval);
        s.get("axioms_all_pass", a.axioms_all_pass);
        s.get("domination_all_pass", a.domination_all_pass);
        s.get("decompose_compensator_rel_error_max", a.decompose_compensator_rel_error_max);
        s.get("decompose_levels_bounded", a.decompose_levels_bounded);
        s.get("recover_mu_interval", a.recover_mu_interval);
        s.get("recover_lipschitz_pass", a.recover_lipschitz_pass);
        s.get("recover_representation_deviation_max", a.recover_representation_deviation_max);
        s.finish();
    }
    root.finish();
    validate(c);
    return c;
}

json to_json(const ExperimentConfig& c) {
    json j;
    j["schema_version"] = c.schema_version;
    j["name"] = c.name;
    j["grid"] = {{"T", c.T}, {"N", c.N}};
    j["ensemble"] = {{"d", c.d}, {"M", c.M}, {"seed", c.seed}};
    j["regression"] = {{"basis", c.basis}, {"size", c.basis_size}};
    j["threads"] = c.threads;
    j["output"] = c.output;
    json gen = {{"kind", c.op.generator.kind}, {"params", c.op.generator.params}};
    if (!c.op.generator.expression.empty()) {
        gen["expression"] = c.op.generator.expression;
    }
    j["operator"] = {{"generator", gen},
                     {"evaluation", c.op.evaluation},
                     {"command", c.op.command},
                     {"fault", {{"kind", c.op.fault}, {"magnitude", c.op.fault_magnitude}}}};
    if (c.simulate) {
        j["simulate"] = {{"export_paths", c.simulate->export_paths}};
    }
    if (c.solve) {
        const auto& v = *c.solve;
        j["solve"] = {{"payoff", payoff_json(v.payoff)},
                      {"oracle", v.oracle},
                      {"convergence_N", v.convergence_N},
                      {"write_paths", v.write_paths}};
    }
    if (c.axioms) {
        j["axioms"] = {{"bootstrap", bootstrap_json(c.axioms->bootstrap)}};
    }
    if (c.domination) {
        const auto& v = *c.domination;
        json d = {{"checks", v.checks},   {"xi1", payoff_json(v.xi1)},
                  {"xi2", payoff_json(v.xi2)}, {"eta", payoff_json(v.eta)},
                  {"z", v.z},             {"K", v.K},
                  {"R", v.R},             {"J", v.J},
                  {"energy_moments", v.energy_moments},
                  {"demo_a", v.demo_a},   {"demo_b", v.demo_b},
                  {"bootstrap", bootstrap_json(v.bootstrap)}};
        put(d, "tau_level", v.tau_level);
        put(d, "ell2", v.ell2);
        j["domination"] = d;
    }
    if (c.decompose) {
        const auto& v = *c.decompose;
        j["decompose"] = {{"z", v.z},
                          {"ell", v.ell},
                          {"schedule", v.schedule},
                          {"fixed_point_tol", v.fixed_point_tol},
                          {"fixed_point_max_iter", v.fixed_point_max_iter}};
    }
    if (c.recover) {
        const auto& v = *c.recover;
        json r = {{"times", v.times},
                  {"zgrid_points", v.zgrid_points},
                  {"zgrid_radius", v.zgrid_radius},
                  {"h_fractions", v.h_fractions},
                  {"puncture", v.puncture},
                  {"representation", v.representation},
                  {"probes", v.probes},
                  {"representation_tolerance", v.representation_tolerance}};
        put(r, "time_homogeneous", v.time_homogeneous);
        put(r, "ell", v.ell);
        j["recover"] = r;
    }
    json a = json::object();
    const auto& acc = c.acceptance;
    put(a, "solve_oracle_rel_error_max", acc.solve_oracle_rel_error_max);
    put(a, "solve_y0_interval", acc.solve_y0_interval);
    put(a, "axioms_all_pass", acc.axioms_all_pass);
    put(a, "domination_all_pass", acc.domination_all_pass);
    put(a, "decompose_compensator_rel_error_max", acc.decompose_compensator_rel_error_max);
    put(a, "decompose_levels_bounded", acc.decompose_levels_bounded);
    put(a, "recover_mu_interval", acc.recover_mu_interval);
    put(a, "recover_lipschitz_pass", acc.recover_lipschitz_pass);
    put(a, "recover_representation_deviation_max", acc.recover_representation_deviation_max);
    j["acceptance"] = a;
    return j;
}

void apply_override(json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override '" + assignment + "' is not KEY=VAL");
    }
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) {
        value = raw;
    }
    json* node = &j;
    std::istringstream parts(key);
    std::string part;
    std::vector<std::string> path;
    while (std::getline(parts, part, '.')) {
        if (part.empty()) {
            throw ConfigError("override key '" + key + "' has an empty component");
        }
        path.push_back(part);
    }
    for (std::size_t k = 0; k + 1 < path.size(); ++k) {
        if (!node->is_object()) {
            throw ConfigError("override key '" + key + "' passes through a non-object");
        }
        node = &(*node)[path[k]];
        if (node->is_null()) {
            *node = json::object();
        }
    }
    if (!node->is_object()) {
        throw ConfigError("override key '" + key + "' passes through a non-object");
    }
    (*node)[path.back()] = std::move(value);
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read config '" + path + "'");
    }
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    json j = read_json_file(path);
    for (const auto& o : overrides) {
        apply_override(j, o);
    }
    return parse_config(j);
}

RegressionBasis make_basis(const ExperimentConfig& c) {
    return c.basis == "polynomial" ? RegressionBasis::polynomial(c.basis_size)
                                   : RegressionBasis::piecewise_local(c.basis_size);
}

Generator make_config_generator(const ExperimentConfig& c) {
    try {
        return make_generator(c.op.generator, c.d);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("operator.generator: ") + e.what());
    }
}

OperatorPtr make_config_operator(const ExperimentConfig& c, const std::string& scratch_dir) {
    const Generator gen = make_config_generator(c);
    OperatorPtr op;
    if (c.op.evaluation == "affine_formula") {
        op = std::make_shared<AffineFormulaExpectation>(gen);
    } else if (c.op.evaluation == "external") {
        op = std::make_shared<ExternalExpectation>(c.op.command, scratch_dir);
    } else if (c.op.generator.kind == "linear") {
        op = std::make_shared<LinearExpectation>();
    } else {
        op = std::make_shared<GExpectation>(gen);
    }
    using Kind = FaultyExpectation::Kind;
    static const std::map<std::string, Kind> kinds{{"bias", Kind::bias},
                                                   {"state_bias", Kind::state_bias},
                                                   {"state_scale", Kind::state_scale},
                                                   {"future_peek", Kind::future_peek}};
    if (auto it = kinds.find(c.op.fault); it != kinds.end()) {
        op = std::make_shared<FaultyExpectation>(op, it->second, c.op.fault_magnitude);
    }
    return op;
}

TerminalCondition payoff_at(const PayoffConfig& p, const PathEnsemble& ens, const StoppingTime& tau) {
    const Expression phi(p.expression, ens.dim());
    std::vector<double> values(ens.paths());
    for (std::size_t m = 0; m < values.size(); ++m) {
        values[m] = phi(ens.grid().time(tau[m]), ens.value(tau[m], m));
    }
    TerminalCondition xi = bounded_terminal(std::move(values), p.bound, ens.dim());
    xi.known_from = tau.index;
    return xi;
}

Payoff make_payoff(const PayoffConfig& p, std::size_t dim) {
    auto phi = std::make_shared<const Expression>(p.expression, dim);
    const double bound = p.bound;
    return [phi, bound](const PathEnsemble& ens) {
        return functional_terminal(ens, [&](std::span<const double> b) { return (*phi)(ens.grid().horizon(), b); },
                                   bound);
    };
}

BootstrapOptions make_bootstrap(const BootstrapConfig& b, std::size_t threads) {
    BootstrapOptions o;
    o.resamples = b.resamples;
    o.seed = b.seed;
    o.threads = threads;
    o.relative_floor = b.relative_floor;
    o.max_fail_fraction = b.max_fail_fraction;
    return o;
}

}  // namespace qfe::cli
