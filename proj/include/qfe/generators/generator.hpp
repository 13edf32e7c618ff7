#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace qfe {

// Serializable description {kind, params}; custom kinds carry an expression.
struct GeneratorSpec {
    std::string kind;
    std::map<std::string, double> params;
    std::string expression;

    bool operator==(const GeneratorSpec&) const = default;
};

// Deterministic driver g(t, z), independent of y. Immutable value object.
class Generator {
public:
    enum class Kind { canonical, entropic, lipschitz_dominator, zero, custom };
    using Function = std::function<double(double, std::span<const double>)>;

    Generator(Kind kind, double growth, Function fn, bool time_dependent, bool radial,
              GeneratorSpec spec);

    double operator()(double t, std::span<const double> z) const { return fn_(t, z); }

    Kind kind() const noexcept { return kind_; }
    // Declared constant l of the quadratic growth / gradient bounds.
    double growth() const noexcept { return growth_; }
    bool time_dependent() const noexcept { return time_dependent_; }
    // Depends on z through |z| only.
    bool radial() const noexcept { return radial_; }
    const GeneratorSpec& spec() const noexcept { return spec_; }
    std::string describe() const;

private:
    Kind kind_;
    double growth_;
    Function fn_;
    bool time_dependent_;
    bool radial_;
    GeneratorSpec spec_;
};

double norm(std::span<const double> z);

// mu (1 + |z|) |z|, with l = 2 mu.
Generator canonical_generator(double mu);

// (gamma / 2) |z|^2, with l = gamma.
Generator entropic_generator(double gamma);

// v -> l (1 + |z| + |z2|) |v|.
Generator lipschitz_dominator(double ell, std::span<const double> z, std::span<const double> z2);

Generator zero_generator();

// Expression-backed generator over d components; the growth constant must be declared.
Generator custom_generator(const std::string& expression, std::size_t dim, double growth,
                           bool time_dependent = true);

// Arbitrary callable, for tests and fault injection.
Generator custom_generator(Generator::Function fn, double growth, std::string label,
                           bool time_dependent = false);

Generator make_generator(const GeneratorSpec& spec, std::size_t dim);

std::string to_string(Generator::Kind kind);

// Lower / upper sandwich g1 <= g2.
struct GeneratorPair {
    Generator lower;
    Generator upper;
};

}  // namespace qfe
