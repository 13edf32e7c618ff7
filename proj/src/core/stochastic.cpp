#include "qfe/core/stochastic.hpp"

#include <stdexcept>

namespace qfe {

namespace {

void check_shape(const PathEnsemble& ensemble, const Field& integrand) {
    if (integrand.rows() != ensemble.steps() || integrand.paths() != ensemble.paths() ||
        integrand.width() != ensemble.dim()) {
        throw std::invalid_argument("integrand shape does not match the ensemble (N x M x d)");
    }
}

}  // namespace

std::vector<double> stochastic_integral(const PathEnsemble& ensemble, const Field& integrand) {
    check_shape(ensemble, integrand);
    std::vector<double> out(ensemble.paths(), 0.0);
    for (std::size_t i = 0; i < ensemble.steps(); ++i) {
        for (std::size_t m = 0; m < ensemble.paths(); ++m) {
            auto z = integrand.at(i, m);
            auto db = ensemble.increment(i, m);
            double s = 0.0;
            for (std::size_t k = 0; k < z.size(); ++k) {
                s += z[k] * db[k];
            }
            out[m] += s;
        }
    }
    return out;
}

std::vector<double> quadratic_variation(const PathEnsemble& ensemble, const Field& integrand) {
    check_shape(ensemble, integrand);
    const double dt = ensemble.grid().dt();
    std::vector<double> out(ensemble.paths(), 0.0);
    for (std::size_t i = 0; i < ensemble.steps(); ++i) {
        for (std::size_t m = 0; m < ensemble.paths(); ++m) {
            double s = 0.0;
            for (double v : integrand.at(i, m)) {
                s += v * v;
            }
            out[m] += s * dt;
        }
    }
    return out;
}

}  // namespace qfe
