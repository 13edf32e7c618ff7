#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qfe/bsde/terminal.hpp"
#include "qfe/core/field.hpp"
#include "qfe/core/regression.hpp"
#include "qfe/generators/generator.hpp"

namespace qfe {

// Bounded terminal data only, or bounded data plus stochastic integrals.
enum class OperatorDomain { bounded, affine_extended };

// A family xi -> E[xi | F_{t_i}] on an ensemble. Implementations override
// evaluate_all; the row-wise accessors derive from it.
class ExpectationOperator {
public:
    virtual ~ExpectationOperator() = default;

    virtual std::string describe() const = 0;
    virtual OperatorDomain domain() const { return OperatorDomain::affine_extended; }

    // N + 1 rows; row N is xi itself.
    virtual Field evaluate_all(const TerminalCondition& xi, const Regressor& reg) const = 0;
    virtual std::vector<double> evaluate_at(const TerminalCondition& xi, const Regressor& reg,
                                            std::size_t step) const;

    // Operators defined by a one-step backward recursion expose it:
    //   out = E_i[next + shift . dB_i]  (shift: M * d per-path vectors, may be empty)
    // for an F_{i+1}-measurable `next`, with the shift handled exactly.
    // Required by the fixed-point solver.
    virtual bool stepwise() const { return false; }
    virtual void step(const Regressor& reg, std::size_t i, std::span<const double> next,
                      std::span<const double> shift, std::span<double> out) const;

    // Sandwich g1 <= g <= g2 of the operator's generator, when declared.
    virtual std::optional<GeneratorPair> generator_pair() const { return std::nullopt; }
};

using OperatorPtr = std::shared_ptr<const ExpectationOperator>;

// E^g via the explicit backward scheme.
class GExpectation : public ExpectationOperator {
public:
    explicit GExpectation(Generator gen, double z_max = 0.0,
                          std::optional<GeneratorPair> pair = std::nullopt);

    std::string describe() const override;
    Field evaluate_all(const TerminalCondition& xi, const Regressor& reg) const override;
    bool stepwise() const override { return true; }
    void step(const Regressor& reg, std::size_t i, std::span<const double> next,
              std::span<const double> shift, std::span<double> out) const override;
    std::optional<GeneratorPair> generator_pair() const override;

    const Generator& generator() const noexcept { return gen_; }

private:
    Generator gen_;
    double z_max_;
    std::optional<GeneratorPair> pair_;
};

// Plain conditional expectation (g = 0).
class LinearExpectation : public GExpectation {
public:
    LinearExpectation();
    std::string describe() const override { return "linear"; }
};

// Planted faults for harness validation, applied at steps i < N:
//   bias:        + c
//   state_bias:  + c 1{B^1_{t_i} > 0}
//   state_scale: bounded part (value minus z . B) scaled by (1 + c) where B^1_{t_i} > 0
//   future_peek: + c dB^1_i (not adapted)
class FaultyExpectation : public ExpectationOperator {
public:
    enum class Kind { bias, state_bias, state_scale, future_peek };

    FaultyExpectation(OperatorPtr inner, Kind kind, double magnitude);

    std::string describe() const override;
    OperatorDomain domain() const override { return inner_->domain(); }
    Field evaluate_all(const TerminalCondition& xi, const Regressor& reg) const override;

private:
    OperatorPtr inner_;
    Kind kind_;
    double magnitude_;
};

// User-supplied evaluator.
class CallableExpectation : public ExpectationOperator {
public:
    using Function = std::function<Field(const TerminalCondition&, const Regressor&)>;

    CallableExpectation(Function fn, std::string label,
                        OperatorDomain domain = OperatorDomain::bounded);

    std::string describe() const override { return label_; }
    OperatorDomain domain() const override { return domain_; }
    Field evaluate_all(const TerminalCondition& xi, const Regressor& reg) const override;

private:
    Function fn_;
    std::string label_;
    OperatorDomain domain_;
};

// Exact E^g for a constant base and deterministic windows with a deterministic g:
// xi0 + z . (B_clamp(i) - B_start) + int over the remaining window of g(s, z) ds.
// Throws std::invalid_argument for any other payoff.
class AffineFormulaExpectation : public ExpectationOperator {
public:
    explicit AffineFormulaExpectation(Generator gen);

    std::string describe() const override;
    Field evaluate_all(const TerminalCondition& xi, const Regressor& reg) const override;

private:
    Generator gen_;
};

// Third-party operator run as a subprocess; see docs/external_protocol.md.
// The command reads a JSON request on stdin and prints one line of M
// comma-separated values per requested step.
class ExternalExpectation : public ExpectationOperator {
public:
    ExternalExpectation(std::string command, std::string scratch_dir,
                        OperatorDomain domain = OperatorDomain::affine_extended);

    std::string describe() const override;
    OperatorDomain domain() const override { return domain_; }
    Field evaluate_all(const TerminalCondition& xi, const Regressor& reg) const override;
    std::vector<double> evaluate_at(const TerminalCondition& xi, const Regressor& reg,
                                    std::size_t step) const override;

private:
    std::vector<std::vector<double>> run(const TerminalCondition& xi, const Regressor& reg,
                                         const std::vector<std::size_t>& steps) const;

    std::string command_;
    std::string scratch_dir_;
    OperatorDomain domain_;
};

// Parses "linear", "canonical:MU", "entropic:GAMMA", "zero".
OperatorPtr make_operator(const std::string& spec);

// Largest |Y[i+1] - Y[i]| over path-steps (discrete-path oscillation diagnostic).
double max_one_step_jump(const Field& values);

}  // namespace qfe
