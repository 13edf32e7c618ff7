#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <istream>
#include <span>
#include <vector>

#include "qfe/core/field.hpp"
#include "qfe/core/grid.hpp"

namespace qfe {

// M sampled d-dimensional Brownian paths on a uniform grid. Immutable after
// construction.
class PathEnsemble {
public:
    // increments: N rows of M * d values; B is rebuilt by cumulative sums.
    PathEnsemble(TimeGrid grid, std::size_t dim, Field increments, std::uint64_t seed);

    const TimeGrid& grid() const noexcept { return grid_; }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t paths() const noexcept { return increments_.paths(); }
    std::size_t steps() const noexcept { return grid_.steps(); }
    std::uint64_t seed() const noexcept { return seed_; }

    std::span<const double> increment(std::size_t i, std::size_t m) const { return increments_.at(i, m); }
    std::span<const double> value(std::size_t i, std::size_t m) const { return values_.at(i, m); }

    // All paths at step i, path-major (M * d).
    std::span<const double> increments(std::size_t i) const { return increments_.row(i); }
    std::span<const double> values(std::size_t i) const { return values_.row(i); }

    const Field& increment_field() const noexcept { return increments_; }
    const Field& value_field() const noexcept { return values_; }

    // Paths picked by index (with repetition); used by the bootstrap.
    PathEnsemble resampled(std::span<const std::size_t> indices) const;

    // The first `steps` steps, on [0, t_steps].
    PathEnsemble truncated(std::size_t steps) const;

    // One row per path-step: m, i, t_i, B components.
    void write_csv(std::ostream& out) const;

    // Inverse of write_csv. B is kept exactly as read; increments are its
    // differences. Throws std::invalid_argument on malformed input.
    static PathEnsemble read_csv(std::istream& in, std::uint64_t seed = 0);

    // Ensemble with the given values (N + 1 rows, B_0 = 0).
    static PathEnsemble from_values(TimeGrid grid, std::size_t dim, Field values, std::uint64_t seed);

private:
    TimeGrid grid_;
    std::size_t dim_;
    Field increments_;
    Field values_;
    std::uint64_t seed_;
};

// Path m draws from its own engine keyed by (seed, m), so a path does not
// depend on how many paths are simulated alongside it.
PathEnsemble simulate_brownian(const TimeGrid& grid, std::size_t dim, std::size_t paths,
                               std::uint64_t seed);

}  // namespace qfe
