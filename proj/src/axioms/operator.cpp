#include "qfe/axioms/operator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "qfe/bsde/solver.hpp"

namespace qfe {

std::vector<double> ExpectationOperator::evaluate_at(const TerminalCondition& xi, const Regressor& reg,
                                                     std::size_t step) const {
    if (step > reg.ensemble().steps()) {
        throw std::out_of_range("evaluate_at: step past the horizon");
    }
    const Field all = evaluate_all(xi, reg);
    auto row = all.row(step);
    return {row.begin(), row.end()};
}

void ExpectationOperator::step(const Regressor&, std::size_t, std::span<const double>,
                               std::span<const double>, std::span<double>) const {
    throw std::logic_error(describe() + " has no one-step recursion");
}

GExpectation::GExpectation(Generator gen, double z_max, std::optional<GeneratorPair> pair)
    : gen_(std::move(gen)), z_max_(z_max), pair_(std::move(pair)) {}

std::string GExpectation::describe() const { return "g-expectation(" + gen_.describe() + ")"; }

Field GExpectation::evaluate_all(const TerminalCondition& xi, const Regressor& reg) const {
    return solve_bsde(xi, gen_, reg, z_max_).Y;
}

void GExpectation::step(const Regressor& reg, std::size_t i, std::span<const double> next,
                        std::span<const double> shift, std::span<double> out) const {
    double z_max = z_max_;
    if (!(z_max > 0.0)) {
        double bound = 0.0;
        for (double v : next) {
            bound = std::max(bound, std::abs(v));
        }
        z_max = default_z_max(reg.ensemble().grid().horizon(), gen_.growth(), bound);
    }
    backward_step(gen_, reg, i, next, shift, z_max, out);
}

std::optional<GeneratorPair> GExpectation::generator_pair() const {
    if (pair_) {
        return pair_;
    }
    return GeneratorPair{gen_, gen_};
}

LinearExpectation::LinearExpectation() : GExpectation(zero_generator()) {}

FaultyExpectation::FaultyExpectation(OperatorPtr inner, Kind kind, double magnitude)
    : inner_(std::move(inner)), kind_(kind), magnitude_(magnitude) {
    if (!inner_) {
        throw std::invalid_argument("faulty operator needs an inner operator");
    }
}

std::string FaultyExpectation::describe() const {
    static const char* names[] = {"bias", "state_bias", "state_scale", "future_peek"};
    std::ostringstream os;
    os << "faulty(" << inner_->describe() << ", " << names[static_cast<int>(kind_)] << '=' << magnitude_ << ')';
    return os.str();
}

Field FaultyExpectation::evaluate_all(const TerminalCondition& xi, const Regressor& reg) const {
    Field y = inner_->evaluate_all(xi, reg);
    const PathEnsemble& ens = reg.ensemble();
    const std::size_t N = ens.steps();
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t m = 0; m < ens.paths(); ++m) {
            const bool up = ens.value(i, m)[0] > 0.0;
            switch (kind_) {
                case Kind::bias:
                    y(i, m) += magnitude_;
                    break;
                case Kind::state_bias:
                    y(i, m) += up ? magnitude_ : 0.0;
                    break;
                case Kind::state_scale:
                    if (up) {
                        const double s = xi.shift_value(ens, i, m);
                        y(i, m) = s + (1.0 + magnitude_) * (y(i, m) - s);
                    }
                    break;
                case Kind::future_peek:
                    y(i, m) += magnitude_ * ens.increment(i, m)[0];
                    break;
            }
        }
    }
    return y;
}

CallableExpectation::CallableExpectation(Function fn, std::string label, OperatorDomain domain)
    : fn_(std::move(fn)), label_(std::move(label)), domain_(domain) {
    if (!fn_) {
        throw std::invalid_argument("callable operator needs a function");
    }
}

Field CallableExpectation::evaluate_all(const TerminalCondition& xi, const Regressor& reg) const {
    Field y = fn_(xi, reg);
    const PathEnsemble& ens = reg.ensemble();
    if (y.rows() != ens.steps() + 1 || y.paths() != ens.paths() || y.width() != 1) {
        throw std::runtime_error(label_ + ": returned field has the wrong shape");
    }
    return y;
}

AffineFormulaExpectation::AffineFormulaExpectation(Generator gen) : gen_(std::move(gen)) {}

std::string AffineFormulaExpectation::describe() const { return "affine-formula(" + gen_.describe() + ")"; }

Field AffineFormulaExpectation::evaluate_all(const TerminalCondition& xi, const Regressor& reg) const {
    const PathEnsemble& ens = reg.ensemble();
    xi.validate(ens);
    const std::size_t M = ens.paths();
    const std::size_t N = ens.steps();
    auto uniform = [](const auto& v) { return std::all_of(v.begin(), v.end(), [&](auto x) { return x == v.front(); }); };
    if (!uniform(xi.base) || !uniform(xi.start) || !uniform(xi.end) || !xi.features.empty() ||
        (!xi.known_from.empty() && !uniform(xi.known_from))) {
        throw std::invalid_argument("affine formula: payoff is not a constant plus a deterministic window");
    }
    const auto& grid = ens.grid();
    const double a = grid.time(xi.start.front());
    const double b = grid.time(xi.end.front());
    Field y(N + 1, M);
    for (std::size_t i = 0; i <= N; ++i) {
        const double drift = xi.has_shift() ? integrate_driver(gen_, xi.z, std::max(a, grid.time(i)), b) : 0.0;
        for (std::size_t m = 0; m < M; ++m) {
            y(i, m) = xi.base[m] + xi.shift_value(ens, i, m) + drift;
        }
    }
    return y;
}

ExternalExpectation::ExternalExpectation(std::string command, std::string scratch_dir, OperatorDomain domain)
    : command_(std::move(command)), scratch_dir_(std::move(scratch_dir)), domain_(domain) {
    if (command_.empty()) {
        throw std::invalid_argument("external operator: empty command");
    }
}

std::string ExternalExpectation::describe() const { return "external(" + command_ + ")"; }

Field ExternalExpectation::evaluate_all(const TerminalCondition& xi, const Regressor& reg) const {
    const std::size_t N = reg.ensemble().steps();
    std::vector<std::size_t> steps(N + 1);
    for (std::size_t i = 0; i <= N; ++i) {
        steps[i] = i;
    }
    const auto rows = run(xi, reg, steps);
    Field y(N + 1, reg.ensemble().paths());
    for (std::size_t i = 0; i <= N; ++i) {
        std::copy(rows[i].begin(), rows[i].end(), y.row(i).begin());
    }
    return y;
}

std::vector<double> ExternalExpectation::evaluate_at(const TerminalCondition& xi, const Regressor& reg,
                                                     std::size_t step) const {
    if (step > reg.ensemble().steps()) {
        throw std::out_of_range("evaluate_at: step past the horizon");
    }
    return run(xi, reg, {step}).front();
}

std::vector<std::vector<double>> ExternalExpectation::run(const TerminalCondition& xi, const Regressor& reg,
                                                          const std::vector<std::size_t>& steps) const {
    namespace fs = std::filesystem;
    static std::atomic<unsigned> counter{0};
    const PathEnsemble& ens = reg.ensemble();
    xi.validate(ens);
    fs::create_directories(scratch_dir_);
    const std::string stem = (fs::path(scratch_dir_) / ("ext_" + std::to_string(::getpid()) + "_" +
                                                         std::to_string(counter.fetch_add(1))))
                                 .string();
    const std::string ens_path = stem + "_ensemble.csv";
    const std::string payoff_path = stem + "_payoff.csv";
    const std::string request_path = stem + "_request.json";
    const std::string reply_path = stem + "_reply.txt";
    {
        std::ofstream out(ens_path);
        ens.write_csv(out);
        std::ofstream pay(payoff_path);
        pay << "m,base,start,end,known_from\n" << std::setprecision(17);
        for (std::size_t m = 0; m < ens.paths(); ++m) {
            pay << m << ',' << xi.base[m] << ',' << xi.start[m] << ',' << xi.end[m] << ','
                << xi.known_step(m, ens.steps()) << '\n';
        }
        nlohmann::json req;
        req["protocol"] = "qfe-external/1";
        req["ensemble"] = ens_path;
        req["payoff"] = payoff_path;
        req["steps"] = steps;
        req["z"] = xi.z;
        req["bound"] = xi.bound;
        req["horizon"] = ens.grid().horizon();
        req["grid_steps"] = ens.steps();
        req["dim"] = ens.dim();
        req["paths"] = ens.paths();
        req["basis"] = {{"kind", reg.basis().kind == RegressionBasis::Kind::polynomial ? "polynomial" : "piecewise_local"},
                        {"degree", reg.basis().degree},
                        {"bins", reg.basis().bins}};
        std::ofstream(request_path) << req.dump(2) << '\n';
        if (!out || !pay) {
            throw std::runtime_error("external operator: cannot write scratch files under " + scratch_dir_);
        }
    }
    const std::string cmd = command_ + " < '" + request_path + "' > '" + reply_path + "'";
    const int rc = std::system(cmd.c_str());
    std::vector<std::vector<double>> rows;
    std::ifstream reply(reply_path);
    std::string line;
    while (std::getline(reply, line)) {
        if (line.empty()) {
            continue;
        }
        std::vector<double> values;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) {
            values.push_back(std::stod(cell));
        }
        rows.push_back(std::move(values));
    }
    for (const auto& p : {ens_path, payoff_path, request_path, reply_path}) {
        std::error_code ec;
        fs::remove(p, ec);
    }
    if (rc != 0) {
        throw std::runtime_error("external operator exited with status " + std::to_string(rc));
    }
    if (rows.size() != steps.size() ||
        std::any_of(rows.begin(), rows.end(), [&](const auto& r) { return r.size() != ens.paths(); })) {
        throw std::runtime_error("external operator: reply does not have one row of M values per step");
    }
    return rows;
}

OperatorPtr make_operator(const std::string& spec) {
    const auto colon = spec.find(':');
    const std::string kind = spec.substr(0, colon);
    double param = 0.0;
    if (colon != std::string::npos) {
        try {
            std::size_t used = 0;
            param = std::stod(spec.substr(colon + 1), &used);
            if (used != spec.size() - colon - 1) {
                throw std::invalid_argument("trailing characters");
            }
        } catch (const std::exception&) {
            throw std::invalid_argument("operator spec '" + spec + "': bad parameter");
        }
    }
    if (kind == "linear" || kind == "zero") {
        return std::make_shared<LinearExpectation>();
    }
    if (kind == "canonical" && colon != std::string::npos) {
        return std::make_shared<GExpectation>(canonical_generator(param));
    }
    if (kind == "entropic" && colon != std::string::npos) {
        return std::make_shared<GExpectation>(entropic_generator(param));
    }
    throw std::invalid_argument("unknown operator spec '" + spec + "'");
}

double max_one_step_jump(const Field& values) {
    double worst = 0.0;
    for (std::size_t i = 0; i + 1 < values.rows(); ++i) {
        for (std::size_t m = 0; m < values.paths(); ++m) {
            worst = std::max(worst, std::abs(values(i + 1, m) - values(i, m)));
        }
    }
    return worst;
}

}  // namespace qfe
