#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace qfe {

// Dense (step, path, component) array. Row i holds paths * width values,
// path-major within the row.
class Field {
public:
    Field() = default;
    Field(std::size_t rows, std::size_t paths, std::size_t width = 1, double fill = 0.0)
        : rows_(rows), paths_(paths), width_(width), data_(rows * paths * width, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t paths() const noexcept { return paths_; }
    std::size_t width() const noexcept { return width_; }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t m, std::size_t k = 0) {
        assert(i < rows_ && m < paths_ && k < width_);
        return data_[(i * paths_ + m) * width_ + k];
    }
    double operator()(std::size_t i, std::size_t m, std::size_t k = 0) const {
        assert(i < rows_ && m < paths_ && k < width_);
        return data_[(i * paths_ + m) * width_ + k];
    }

    std::span<double> row(std::size_t i) {
        return {data_.data() + i * paths_ * width_, paths_ * width_};
    }
    std::span<const double> row(std::size_t i) const {
        return {data_.data() + i * paths_ * width_, paths_ * width_};
    }

    std::span<double> at(std::size_t i, std::size_t m) {
        return {data_.data() + (i * paths_ + m) * width_, width_};
    }
    std::span<const double> at(std::size_t i, std::size_t m) const {
        return {data_.data() + (i * paths_ + m) * width_, width_};
    }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    bool operator==(const Field&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t paths_ = 0;
    std::size_t width_ = 0;
    std::vector<double> data_;
};

}  // namespace qfe
