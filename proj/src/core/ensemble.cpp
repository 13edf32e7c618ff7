#include "qfe/core/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <ostream>
#include <random>
#include <stdexcept>

namespace qfe {

PathEnsemble::PathEnsemble(TimeGrid grid, std::size_t dim, Field increments, std::uint64_t seed)
    : grid_(grid), dim_(dim), increments_(std::move(increments)), seed_(seed) {
    if (dim_ == 0) {
        throw std::invalid_argument("ensemble: dimension must be at least 1");
    }
    if (increments_.rows() != grid_.steps() || increments_.width() != dim_) {
        throw std::invalid_argument("ensemble: increments do not match grid and dimension");
    }
    if (increments_.paths() == 0) {
        throw std::invalid_argument("ensemble: at least one path required");
    }
    const std::size_t M = increments_.paths();
    values_ = Field(grid_.steps() + 1, M, dim_, 0.0);
    for (std::size_t i = 0; i < grid_.steps(); ++i) {
        auto prev = values_.row(i);
        auto next = values_.row(i + 1);
        auto inc = increments_.row(i);
        for (std::size_t j = 0; j < next.size(); ++j) {
            next[j] = prev[j] + inc[j];
        }
    }
}

PathEnsemble PathEnsemble::resampled(std::span<const std::size_t> indices) const {
    Field inc(grid_.steps(), indices.size(), dim_);
    for (std::size_t i = 0; i < grid_.steps(); ++i) {
        for (std::size_t n = 0; n < indices.size(); ++n) {
            auto src = increments_.at(i, indices[n]);
            auto dst = inc.at(i, n);
            std::copy(src.begin(), src.end(), dst.begin());
        }
    }
    return PathEnsemble(grid_, dim_, std::move(inc), seed_);
}

PathEnsemble PathEnsemble::truncated(std::size_t steps) const {
    if (steps == 0 || steps > grid_.steps()) {
        throw std::invalid_argument("ensemble: truncation must keep between 1 and N steps");
    }
    Field inc(steps, paths(), dim_);
    for (std::size_t i = 0; i < steps; ++i) {
        auto src = increments_.row(i);
        std::copy(src.begin(), src.end(), inc.row(i).begin());
    }
    return PathEnsemble(TimeGrid(grid_.time(steps), steps), dim_, std::move(inc), seed_);
}

void PathEnsemble::write_csv(std::ostream& out) const {
    out << "m,i,t";
    for (std::size_t k = 0; k < dim_; ++k) {
        out << ",B" << k;
    }
    out << '\n';
    const auto old_precision = out.precision(17);
    for (std::size_t m = 0; m < paths(); ++m) {
        for (std::size_t i = 0; i <= grid_.steps(); ++i) {
            out << m << ',' << i << ',' << grid_.time(i);
            for (double b : value(i, m)) {
                out << ',' << b;
            }
            out << '\n';
        }
    }
    out.precision(old_precision);
}

PathEnsemble PathEnsemble::from_values(TimeGrid grid, std::size_t dim, Field values, std::uint64_t seed) {
    if (values.rows() != grid.steps() + 1 || values.width() != dim) {
        throw std::invalid_argument("ensemble: values do not match grid and dimension");
    }
    Field inc(grid.steps(), values.paths(), dim);
    for (std::size_t i = 0; i < grid.steps(); ++i) {
        auto a = values.row(i);
        auto b = values.row(i + 1);
        auto out = inc.row(i);
        for (std::size_t j = 0; j < out.size(); ++j) {
            out[j] = b[j] - a[j];
        }
    }
    for (double b0 : values.row(0)) {
        if (b0 != 0.0) {
            throw std::invalid_argument("ensemble: paths must start at zero");
        }
    }
    PathEnsemble ens(grid, dim, std::move(inc), seed);
    ens.values_ = std::move(values);
    return ens;
}

PathEnsemble PathEnsemble::read_csv(std::istream& in, std::uint64_t seed) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("m,i,t,B0", 0) != 0) {
        throw std::invalid_argument("ensemble csv: missing header");
    }
    const auto dim = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',') - 2);
    struct Row {
        std::size_t m, i;
        double t;
        std::vector<double> b;
    };
    std::vector<Row> rows;
    std::size_t M = 0;
    std::size_t N = 0;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::istringstream ls(line);
        Row r;
        char c1 = 0, c2 = 0;
        ls >> r.m >> c1 >> r.i >> c2 >> r.t;
        if (!ls || c1 != ',' || c2 != ',') {
            throw std::invalid_argument("ensemble csv: malformed row");
        }
        r.b.resize(dim);
        for (double& v : r.b) {
            char c = 0;
            ls >> c >> v;
            if (!ls || c != ',') {
                throw std::invalid_argument("ensemble csv: malformed row");
            }
        }
        M = std::max(M, r.m + 1);
        N = std::max(N, r.i);
        rows.push_back(std::move(r));
    }
    if (N == 0 || rows.size() != M * (N + 1)) {
        throw std::invalid_argument("ensemble csv: incomplete path-step table");
    }
    double horizon = 0.0;
    Field values(N + 1, M, dim);
    for (const Row& r : rows) {
        std::copy(r.b.begin(), r.b.end(), values.at(r.i, r.m).begin());
        if (r.i == N) {
            horizon = r.t;
        }
    }
    return from_values(TimeGrid(horizon, N), dim, std::move(values), seed);
}

PathEnsemble simulate_brownian(const TimeGrid& grid, std::size_t dim, std::size_t paths,
                               std::uint64_t seed) {
    if (paths == 0 || dim == 0) {
        throw std::invalid_argument("simulate_brownian: need at least one path and one dimension");
    }
    const std::size_t N = grid.steps();
    const double sd = std::sqrt(grid.dt());
    Field inc(N, paths, dim);
    for (std::size_t m = 0; m < paths; ++m) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(m), static_cast<std::uint32_t>(m >> 32)};
        std::mt19937_64 engine(seq);
        std::normal_distribution<double> normal(0.0, 1.0);
        for (std::size_t i = 0; i < N; ++i) {
            for (std::size_t k = 0; k < dim; ++k) {
                inc(i, m, k) = sd * normal(engine);
            }
        }
    }
    return PathEnsemble(grid, dim, std::move(inc), seed);
}

}  // namespace qfe
