#pragma once

#include <cstddef>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qfe/core/ensemble.hpp"

namespace qfe {

// Functions of B_{t_i} used as regressors. Both kinds contain the constant.
struct RegressionBasis {
    enum class Kind { polynomial, piecewise_local };

    Kind kind = Kind::polynomial;
    // Total degree of the Hermite polynomial basis.
    std::size_t degree = 3;
    // Equal-count bins of the piecewise-local (local linear) basis, d = 1 only.
    std::size_t bins = 20;

    static RegressionBasis polynomial(std::size_t degree);
    static RegressionBasis piecewise_local(std::size_t bins);

    // Degree 3 for d = 1, tensor degree 2 for d <= 3, linear above.
    static RegressionBasis defaults(std::size_t dim);

    std::string describe() const;

    bool operator==(const RegressionBasis&) const = default;
};

// Restricts a projection to a subset of paths and adjoins extra regressors.
// Features are F_{t_i}-measurable per-path values; the design becomes
// basis(B_i) (x) (1, f_1, ..., f_a).
struct ProjectionScope {
    std::vector<std::span<const double>> features;
    // Nonzero entries mark paths taking part; empty means all paths.
    std::span<const unsigned char> active;
};

class Regressor;

// Least-squares projector for one grid step and one scope. Fitted values are
// written only for paths in scope.
class Projector {
public:
    void apply(std::span<const double> target, std::span<double> out) const;
    std::vector<double> apply(std::span<const double> target) const;

    // Number of regressors actually used (after any degree reduction).
    std::size_t rank() const noexcept { return rank_; }
    std::size_t sample_size() const noexcept { return rows_.size(); }

private:
    friend class Regressor;

    struct Block {
        std::vector<std::size_t> rows;  // positions in rows_
        Eigen::MatrixXd design;         // rows.size() x p_b
        Eigen::LDLT<Eigen::MatrixXd> gram;
        bool constant_only = false;
    };

    std::size_t paths_ = 0;
    std::vector<std::size_t> rows_;  // path indices in scope
    std::vector<Block> blocks_;
    std::size_t rank_ = 0;
};

// Cross-sectional least-squares regression standing in for E[. | F_{t_i}].
// Holds a reference to the ensemble, which must outlive it.
class Regressor {
public:
    Regressor(const PathEnsemble& ensemble, RegressionBasis basis);

    const PathEnsemble& ensemble() const noexcept { return *ensemble_; }
    const RegressionBasis& basis() const noexcept { return basis_; }

    // Full-sample projection without features throws DegenerateBasisError when
    // the design is rank deficient. Scoped projections reduce the degree
    // instead, since their samples shrink by construction.
    Projector projector(std::size_t i, const ProjectionScope& scope = {}) const;

    // Full-sample projector for step i, built on first use and shared by
    // copies of this regressor. Safe to call concurrently.
    std::shared_ptr<const Projector> full_projector(std::size_t i) const;

    std::vector<double> project(std::size_t i, std::span<const double> target,
                                const ProjectionScope& scope = {}) const;

private:
    struct Cache {
        std::mutex mutex;
        std::vector<std::shared_ptr<const Projector>> entries;
    };

    Projector polynomial_projector(std::size_t i, const ProjectionScope& scope,
                                   const std::vector<std::size_t>& rows,
                                   const std::vector<std::span<const double>>& features,
                                   bool strict) const;
    Projector piecewise_projector(std::size_t i, const std::vector<std::size_t>& rows,
                                  const std::vector<std::span<const double>>& features) const;

    const PathEnsemble* ensemble_;
    RegressionBasis basis_;
    // Per step and component: sample mean and standard deviation of B.
    std::vector<double> center_;
    std::vector<double> scale_;
    std::shared_ptr<Cache> cache_;
};

// One-shot E[target | F_{t_i}] for a target observed at step j > i.
std::vector<double> condexp_regress(const PathEnsemble& ensemble, std::span<const double> target,
                                    std::size_t target_step, std::size_t state_step,
                                    const RegressionBasis& basis);

}  // namespace qfe
