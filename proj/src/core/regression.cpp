#include "qfe/core/regression.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "qfe/core/errors.hpp"

namespace qfe {

namespace {

// Condition threshold on the unit-diagonal Gram matrix.
constexpr double kRankTolerance = 1e-12;

// Standardized range covered evenly by the piecewise-local bins.
constexpr double kMaxSpan = 6.0;

// Probabilists' Hermite polynomials He_0..He_n at x.
void hermite(double x, std::size_t n, double* out) {
    out[0] = 1.0;
    if (n >= 1) {
        out[1] = x;
    }
    for (std::size_t k = 1; k < n; ++k) {
        out[k + 1] = x * out[k] - static_cast<double>(k) * out[k - 1];
    }
}

// Exponent tuples over `components` with total degree <= degree, ordered by total degree.
std::vector<std::vector<std::size_t>> multi_indices(std::size_t components, std::size_t degree) {
    std::vector<std::vector<std::size_t>> out;
    std::vector<std::size_t> current(components, 0);
    for (std::size_t total = 0; total <= degree; ++total) {
        // Enumerate compositions of `total` into `components` parts.
        auto recurse = [&](auto&& self, std::size_t pos, std::size_t remaining) -> void {
            if (pos + 1 == components) {
                current[pos] = remaining;
                out.push_back(current);
                return;
            }
            for (std::size_t a = remaining + 1; a-- > 0;) {
                current[pos] = a;
                self(self, pos + 1, remaining - a);
            }
        };
        if (components == 0) {
            if (total == 0) {
                out.emplace_back();
            }
            continue;
        }
        recurse(recurse, 0, total);
    }
    return out;
}

bool well_conditioned(const Eigen::MatrixXd& gram) {
    const Eigen::VectorXd diag = gram.diagonal();
    if ((diag.array() <= 0.0).any()) {
        return false;
    }
    const Eigen::VectorXd inv = diag.array().sqrt().inverse();
    const Eigen::MatrixXd normalized = inv.asDiagonal() * gram * inv.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(normalized, Eigen::EigenvaluesOnly);
    const auto& ev = eig.eigenvalues();
    return ev.minCoeff() > kRankTolerance * ev.maxCoeff();
}

bool constant_over(std::span<const double> values, const std::vector<std::size_t>& rows) {
    if (rows.empty()) {
        return true;
    }
    const double first = values[rows.front()];
    return std::all_of(rows.begin(), rows.end(), [&](std::size_t m) { return values[m] == first; });
}

}  // namespace

RegressionBasis RegressionBasis::polynomial(std::size_t degree) {
    return RegressionBasis{Kind::polynomial, degree, 20};
}

RegressionBasis RegressionBasis::piecewise_local(std::size_t bins) {
    if (bins == 0) {
        throw std::invalid_argument("piecewise-local basis needs at least one bin");
    }
    return RegressionBasis{Kind::piecewise_local, 1, bins};
}

RegressionBasis RegressionBasis::defaults(std::size_t dim) {
    if (dim == 1) {
        return polynomial(3);
    }
    if (dim <= 3) {
        return polynomial(2);
    }
    return polynomial(1);
}

std::string RegressionBasis::describe() const {
    std::ostringstream os;
    if (kind == Kind::polynomial) {
        os << "polynomial(degree=" << degree << ")";
    } else {
        os << "piecewise_local(bins=" << bins << ")";
    }
    return os.str();
}

void Projector::apply(std::span<const double> target, std::span<double> out) const {
    if (target.size() != paths_ || out.size() != paths_) {
        throw std::invalid_argument("projector: target size does not match the ensemble");
    }
    if (rows_.empty()) {
        return;
    }
    const double first = target[rows_.front()];
    if (std::all_of(rows_.begin(), rows_.end(), [&](std::size_t m) { return target[m] == first; })) {
        for (std::size_t m : rows_) {
            out[m] = first;
        }
        return;
    }
    for (const Block& block : blocks_) {
        const std::size_t n = block.rows.size();
        if (n == 0) {
            continue;
        }
        Eigen::VectorXd y(n);
        for (std::size_t r = 0; r < n; ++r) {
            y[static_cast<Eigen::Index>(r)] = target[rows_[block.rows[r]]];
        }
        if (block.constant_only) {
            const double avg = y.mean();
            for (std::size_t r = 0; r < n; ++r) {
                out[rows_[block.rows[r]]] = avg;
            }
            continue;
        }
        const Eigen::VectorXd beta = block.gram.solve(block.design.transpose() * y);
        const Eigen::VectorXd fitted = block.design * beta;
        for (std::size_t r = 0; r < n; ++r) {
            out[rows_[block.rows[r]]] = fitted[static_cast<Eigen::Index>(r)];
        }
    }
}

std::vector<double> Projector::apply(std::span<const double> target) const {
    std::vector<double> out(paths_, 0.0);
    apply(target, out);
    return out;
}

Regressor::Regressor(const PathEnsemble& ensemble, RegressionBasis basis)
    : ensemble_(&ensemble), basis_(basis), cache_(std::make_shared<Cache>()) {
    cache_->entries.resize(ensemble.steps() + 1);
    if (basis_.kind == RegressionBasis::Kind::piecewise_local && ensemble.dim() != 1) {
        throw std::invalid_argument("piecewise-local basis supports one-dimensional ensembles only");
    }
    if (basis_.kind == RegressionBasis::Kind::piecewise_local && basis_.bins == 0) {
        throw std::invalid_argument("piecewise-local basis needs at least one bin");
    }
    const std::size_t N = ensemble.steps();
    const std::size_t d = ensemble.dim();
    const std::size_t M = ensemble.paths();
    center_.assign((N + 1) * d, 0.0);
    scale_.assign((N + 1) * d, 0.0);
    for (std::size_t i = 0; i <= N; ++i) {
        auto row = ensemble.values(i);
        for (std::size_t k = 0; k < d; ++k) {
            double s = 0.0;
            for (std::size_t m = 0; m < M; ++m) {
                s += row[m * d + k];
            }
            const double mu = s / static_cast<double>(M);
            double v = 0.0;
            for (std::size_t m = 0; m < M; ++m) {
                const double e = row[m * d + k] - mu;
                v += e * e;
            }
            center_[i * d + k] = mu;
            scale_[i * d + k] = M > 1 ? std::sqrt(v / static_cast<double>(M - 1)) : 0.0;
        }
    }
}

Projector Regressor::projector(std::size_t i, const ProjectionScope& scope) const {
    if (i > ensemble_->steps()) {
        throw std::out_of_range("regressor: step past the horizon");
    }
    const std::size_t M = ensemble_->paths();
    if (!scope.active.empty() && scope.active.size() != M) {
        throw std::invalid_argument("regressor: active mask size does not match the ensemble");
    }
    std::vector<std::size_t> rows;
    rows.reserve(M);
    for (std::size_t m = 0; m < M; ++m) {
        if (scope.active.empty() || scope.active[m] != 0) {
            rows.push_back(m);
        }
    }
    std::vector<std::span<const double>> features;
    for (auto f : scope.features) {
        if (f.size() != M) {
            throw std::invalid_argument("regressor: feature size does not match the ensemble");
        }
        if (!constant_over(f, rows)) {
            features.push_back(f);
        }
    }
    if (basis_.kind == RegressionBasis::Kind::piecewise_local) {
        return piecewise_projector(i, rows, features);
    }
    const bool strict = scope.active.empty() && scope.features.empty();
    return polynomial_projector(i, scope, rows, features, strict);
}

Projector Regressor::polynomial_projector(std::size_t i, const ProjectionScope&,
                                          const std::vector<std::size_t>& rows,
                                          const std::vector<std::span<const double>>& features,
                                          bool strict) const {
    const std::size_t d = ensemble_->dim();
    Projector proj;
    proj.paths_ = ensemble_->paths();
    proj.rows_ = rows;
    if (rows.empty()) {
        return proj;
    }

    // Components with zero spread (e.g. B_0) carry no information.
    std::vector<std::size_t> live;
    for (std::size_t k = 0; k < d; ++k) {
        if (scale_[i * d + k] > 0.0) {
            live.push_back(k);
        }
    }
    auto values = ensemble_->values(i);
    const std::size_t n = rows.size();
    const std::size_t nf = features.size();

    for (std::size_t degree = basis_.degree + 1; degree-- > 0;) {
        const auto exps = multi_indices(live.size(), live.empty() ? 0 : degree);
        const std::size_t p = exps.size();
        const std::size_t q = p * (1 + nf);
        if (!strict && n < 2 * q && degree > 0) {
            continue;
        }
        Eigen::MatrixXd design(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(q));
        std::vector<double> he((degree + 1) * live.size());
        for (std::size_t r = 0; r < n; ++r) {
            const std::size_t m = rows[r];
            for (std::size_t c = 0; c < live.size(); ++c) {
                const std::size_t k = live[c];
                const double x = (values[m * d + k] - center_[i * d + k]) / scale_[i * d + k];
                hermite(x, degree, he.data() + c * (degree + 1));
            }
            for (std::size_t j = 0; j < p; ++j) {
                double v = 1.0;
                for (std::size_t c = 0; c < live.size(); ++c) {
                    v *= he[c * (degree + 1) + exps[j][c]];
                }
                design(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = v;
                for (std::size_t f = 0; f < nf; ++f) {
                    design(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>((f + 1) * p + j)) =
                        v * features[f][m];
                }
            }
        }
        Eigen::MatrixXd gram = design.transpose() * design;
        if (!well_conditioned(gram)) {
            if (strict) {
                std::ostringstream os;
                os << "regression design at step " << i << " is rank deficient (" << basis_.describe()
                   << ", " << n << " samples)";
                throw DegenerateBasisError(os.str());
            }
            if (degree > 0) {
                continue;
            }
            // Constant only: the features themselves are collinear.
            Projector::Block block;
            block.rows.resize(n);
            std::iota(block.rows.begin(), block.rows.end(), std::size_t{0});
            block.constant_only = true;
            proj.blocks_.push_back(std::move(block));
            proj.rank_ = 1;
            return proj;
        }
        Projector::Block block;
        block.rows.resize(n);
        std::iota(block.rows.begin(), block.rows.end(), std::size_t{0});
        block.design = std::move(design);
        block.gram.compute(gram);
        proj.blocks_.push_back(std::move(block));
        proj.rank_ = q;
        return proj;
    }
    // Unreachable in practice: degree 0 with n >= 1 always terminates above.
    Projector::Block block;
    block.rows.resize(n);
    std::iota(block.rows.begin(), block.rows.end(), std::size_t{0});
    block.constant_only = true;
    proj.blocks_.push_back(std::move(block));
    proj.rank_ = 1;
    return proj;
}

Projector Regressor::piecewise_projector(std::size_t i, const std::vector<std::size_t>& rows,
                                         const std::vector<std::span<const double>>& features) const {
    Projector proj;
    proj.paths_ = ensemble_->paths();
    proj.rows_ = rows;
    const std::size_t n = rows.size();
    if (n == 0) {
        return proj;
    }
    auto values = ensemble_->values(i);
    const double sc = scale_[i] > 0.0 ? scale_[i] : 1.0;
    std::vector<double> x(n);
    for (std::size_t r = 0; r < n; ++r) {
        x[r] = (values[rows[r]] - center_[i]) / sc;
    }
    const std::size_t nf = features.size();
    const std::size_t q_full = 2 * (1 + nf);
    const std::size_t max_bins = std::max<std::size_t>(1, n / (8 * q_full));
    const std::size_t bins = std::min(basis_.bins, max_bins);

    // Edges are sample values, so equal states always share a bin. Equal-count
    // bins wider than kMaxSpan / bins (standardized units) are halved while both
    // halves keep enough samples, so sparse tails do not extrapolate far.
    std::vector<double> sorted = x;
    std::sort(sorted.begin(), sorted.end());
    const double max_width = kMaxSpan / static_cast<double>(bins);
    const std::size_t min_count = std::max<std::size_t>(32, 8 * q_full);
    std::vector<std::pair<std::size_t, std::size_t>> pending;
    for (std::size_t b = bins; b-- > 0;) {
        pending.emplace_back(b * n / bins, (b + 1) * n / bins);
    }
    std::vector<double> edges;
    while (!pending.empty()) {
        auto [lo, hi] = pending.back();
        pending.pop_back();
        if (hi <= lo) {
            continue;
        }
        if (hi - lo >= 2 * min_count && sorted[hi - 1] - sorted[lo] > max_width) {
            const double mid = 0.5 * (sorted[lo] + sorted[hi - 1]);
            auto k = static_cast<std::size_t>(std::lower_bound(sorted.begin() + static_cast<std::ptrdiff_t>(lo),
                                                               sorted.begin() + static_cast<std::ptrdiff_t>(hi), mid) -
                                              sorted.begin());
            k = std::clamp(k, lo + min_count, hi - min_count);
            if (sorted[k] > sorted[k - 1]) {
                pending.emplace_back(k, hi);
                pending.emplace_back(lo, k);
                continue;
            }
        }
        if (lo > 0 && (edges.empty() || sorted[lo] > edges.back())) {
            edges.push_back(sorted[lo]);
        }
    }
    std::vector<std::vector<std::size_t>> members(edges.size() + 1);
    for (std::size_t r = 0; r < n; ++r) {
        const auto b = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), x[r]) - edges.begin());
        members[b].push_back(r);
    }

    std::size_t rank = 0;
    for (auto& bin_rows : members) {
        if (bin_rows.empty()) {
            continue;
        }
        const std::size_t nb = bin_rows.size();
        double lo = x[bin_rows.front()];
        double hi = lo;
        double centre = 0.0;
        for (std::size_t r : bin_rows) {
            lo = std::min(lo, x[r]);
            hi = std::max(hi, x[r]);
            centre += x[r];
        }
        centre /= static_cast<double>(nb);

        Projector::Block block;
        block.rows = bin_rows;
        bool done = false;
        for (std::size_t local = (hi > lo ? 2 : 1); local >= 1 && !done; --local) {
            const std::size_t q = local * (1 + nf);
            if (nb < q) {
                continue;
            }
            Eigen::MatrixXd design(static_cast<Eigen::Index>(nb), static_cast<Eigen::Index>(q));
            for (std::size_t r = 0; r < nb; ++r) {
                const std::size_t row = bin_rows[r];
                double phi[2] = {1.0, x[row] - centre};
                for (std::size_t j = 0; j < local; ++j) {
                    design(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = phi[j];
                    for (std::size_t f = 0; f < nf; ++f) {
                        design(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>((f + 1) * local + j)) =
                            phi[j] * features[f][rows[row]];
                    }
                }
            }
            Eigen::MatrixXd gram = design.transpose() * design;
            if (!well_conditioned(gram)) {
                continue;
            }
            block.design = std::move(design);
            block.gram.compute(gram);
            rank += q;
            done = true;
        }
        if (!done) {
            block.constant_only = true;
            rank += 1;
        }
        proj.blocks_.push_back(std::move(block));
    }
    proj.rank_ = rank;
    return proj;
}

std::shared_ptr<const Projector> Regressor::full_projector(std::size_t i) const {
    if (i > ensemble_->steps()) {
        throw std::out_of_range("regressor: step past the horizon");
    }
    {
        std::lock_guard lock(cache_->mutex);
        if (cache_->entries[i]) {
            return cache_->entries[i];
        }
    }
    auto built = std::make_shared<const Projector>(projector(i));
    std::lock_guard lock(cache_->mutex);
    if (!cache_->entries[i]) {
        cache_->entries[i] = std::move(built);
    }
    return cache_->entries[i];
}

std::vector<double> Regressor::project(std::size_t i, std::span<const double> target,
                                       const ProjectionScope& scope) const {
    if (scope.active.empty() && scope.features.empty()) {
        return full_projector(i)->apply(target);
    }
    return projector(i, scope).apply(target);
}

std::vector<double> condexp_regress(const PathEnsemble& ensemble, std::span<const double> target,
                                    std::size_t target_step, std::size_t state_step,
                                    const RegressionBasis& basis) {
    if (state_step >= target_step || target_step > ensemble.steps()) {
        throw std::invalid_argument("condexp_regress: need state step < target step <= N");
    }
    if (target.size() != ensemble.paths()) {
        throw std::invalid_argument("condexp_regress: one target value per path required");
    }
    Regressor reg(ensemble, basis);
    return reg.project(state_step, target);
}

}  // namespace qfe
