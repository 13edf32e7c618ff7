#include "qfe/generators/generator.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "qfe/generators/expression.hpp"

namespace qfe {

double norm(std::span<const double> z) {
    double s = 0.0;
    for (double v : z) {
        s += v * v;
    }
    return std::sqrt(s);
}

Generator::Generator(Kind kind, double growth, Function fn, bool time_dependent, bool radial,
                     GeneratorSpec spec)
    : kind_(kind), growth_(growth), fn_(std::move(fn)), time_dependent_(time_dependent),
      radial_(radial), spec_(std::move(spec)) {
    if (!(growth_ >= 0.0) || !std::isfinite(growth_)) {
        throw std::invalid_argument("generator: growth constant must be finite and non-negative");
    }
}

std::string Generator::describe() const {
    std::ostringstream os;
    os << spec_.kind;
    if (!spec_.params.empty()) {
        os << '(';
        bool first = true;
        for (const auto& [k, v] : spec_.params) {
            os << (first ? "" : ",") << k << '=' << v;
            first = false;
        }
        os << ')';
    }
    if (!spec_.expression.empty()) {
        os << "[" << spec_.expression << "]";
    }
    return os.str();
}

std::string to_string(Generator::Kind kind) {
    switch (kind) {
        case Generator::Kind::canonical: return "canonical";
        case Generator::Kind::entropic: return "entropic";
        case Generator::Kind::lipschitz_dominator: return "lipschitz_dominator";
        case Generator::Kind::zero: return "zero";
        case Generator::Kind::custom: return "custom";
    }
    return "custom";
}

Generator canonical_generator(double mu) {
    if (!(mu > 0.0)) {
        throw std::invalid_argument("canonical generator: mu must be positive");
    }
    auto fn = [mu](double, std::span<const double> z) {
        const double r = norm(z);
        return mu * (1.0 + r) * r;
    };
    return Generator(Generator::Kind::canonical, 2.0 * mu, fn, false, true,
                     GeneratorSpec{"canonical", {{"mu", mu}}, {}});
}

Generator entropic_generator(double gamma) {
    if (!(gamma > 0.0)) {
        throw std::invalid_argument("entropic generator: gamma must be positive");
    }
    auto fn = [gamma](double, std::span<const double> z) {
        double s = 0.0;
        for (double v : z) {
            s += v * v;
        }
        return 0.5 * gamma * s;
    };
    return Generator(Generator::Kind::entropic, gamma, fn, false, true,
                     GeneratorSpec{"entropic", {{"gamma", gamma}}, {}});
}

Generator lipschitz_dominator(double ell, std::span<const double> z, std::span<const double> z2) {
    if (!(ell > 0.0)) {
        throw std::invalid_argument("lipschitz dominator: l must be positive");
    }
    const double slope = ell * (1.0 + norm(z) + norm(z2));
    auto fn = [slope](double, std::span<const double> v) { return slope * norm(v); };
    return Generator(Generator::Kind::lipschitz_dominator, slope, fn, false, true,
                     GeneratorSpec{"lipschitz_dominator", {{"ell", ell}, {"slope", slope}}, {}});
}

Generator zero_generator() {
    return Generator(Generator::Kind::zero, 0.0, [](double, std::span<const double>) { return 0.0; },
                     false, true, GeneratorSpec{"zero", {}, {}});
}

Generator custom_generator(const std::string& expression, std::size_t dim, double growth,
                           bool time_dependent) {
    Expression expr(expression, dim);
    auto fn = [expr](double t, std::span<const double> z) { return expr(t, z); };
    return Generator(Generator::Kind::custom, growth, fn, time_dependent, false,
                     GeneratorSpec{"custom", {{"ell", growth}}, expression});
}

Generator custom_generator(Generator::Function fn, double growth, std::string label,
                           bool time_dependent) {
    return Generator(Generator::Kind::custom, growth, std::move(fn), time_dependent, false,
                     GeneratorSpec{"custom", {{"ell", growth}}, std::move(label)});
}

Generator make_generator(const GeneratorSpec& spec, std::size_t dim) {
    auto param = [&](const std::string& key) {
        auto it = spec.params.find(key);
        if (it == spec.params.end()) {
            throw std::invalid_argument("generator '" + spec.kind + "' requires parameter '" + key + "'");
        }
        return it->second;
    };
    if (spec.kind == "canonical") return canonical_generator(param("mu"));
    if (spec.kind == "entropic") return entropic_generator(param("gamma"));
    if (spec.kind == "zero" || spec.kind == "linear") return zero_generator();
    if (spec.kind == "custom") {
        if (spec.expression.empty()) {
            throw std::invalid_argument("custom generator requires an expression");
        }
        return custom_generator(spec.expression, dim, param("ell"));
    }
    throw std::invalid_argument("unknown generator kind '" + spec.kind + "'");
}

}  // namespace qfe
