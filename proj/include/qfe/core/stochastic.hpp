#pragma once

#include <vector>

#include "qfe/core/ensemble.hpp"
#include "qfe/core/field.hpp"

namespace qfe {

// Ito-forward sum  sum_i <Z_i, dB_i>  per path. Z has N rows and width d.
std::vector<double> stochastic_integral(const PathEnsemble& ensemble, const Field& integrand);

// Discrete quadratic variation  sum_i |Z_i|^2 dt  per path.
std::vector<double> quadratic_variation(const PathEnsemble& ensemble, const Field& integrand);

}  // namespace qfe
