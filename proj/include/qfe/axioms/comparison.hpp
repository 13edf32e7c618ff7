#pragma once

#include <functional>

#include "qfe/axioms/harness.hpp"
#include "qfe/decomposition/fixed_point.hpp"

namespace qfe {

// Per path-step inhomogeneity (N + 1 rows); an empty function means zero.
using PathField = std::function<Field(const PathEnsemble&)>;

// Comparison for the fixed-point equation: Y solves it with (xi, f) and Y'
// with (xi', f + phi), where xi <= xi' and phi >= 0. Violation (Y - Y')^+ over
// all path-steps.
AxiomReport check_comparison(OperatorPtr op, const Payoff& xi, const Payoff& xi_prime, const Driver& driver,
                             const PathField& phi, const Regressor& reg, const BootstrapOptions& opts = {},
                             const FixedPointOptions& fixed_point = {});

}  // namespace qfe
