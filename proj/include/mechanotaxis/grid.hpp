#pragma once

#include "mechanotaxis/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mechanotaxis {

/// Uniform periodic grid on [-L/2, L/2). Cell i spans [x_i, x_{i+1}) with
/// x_i = -L/2 + i*dx; interface i sits between cells i-1 and i.
class Grid {
public:
    Grid(double length, std::size_t cells) : length_(length), cells_(cells) {
        if (!(length > 0.0) || !std::isfinite(length))
            throw DomainError("grid length must be positive and finite");
        if (cells < 4)
            throw DomainError("grid needs at least 4 cells");
    }

    double length() const noexcept { return length_; }
    std::size_t size() const noexcept { return cells_; }
    double dx() const noexcept { return length_ / static_cast<double>(cells_); }

    double edge(std::ptrdiff_t i) const noexcept {
        return -0.5 * length_ + static_cast<double>(i) * dx();
    }
    double center(std::size_t i) const noexcept {
        return -0.5 * length_ + (static_cast<double>(i) + 0.5) * dx();
    }

    /// Periodic index map; total over all integers.
    std::size_t wrap(std::ptrdiff_t i) const noexcept {
        const auto n = static_cast<std::ptrdiff_t>(cells_);
        return static_cast<std::size_t>(((i % n) + n) % n);
    }

    friend bool operator==(const Grid&, const Grid&) = default;

private:
    double length_;
    std::size_t cells_;
};

/// Cell-averaged scalar values on a periodic grid.
class Field {
public:
    explicit Field(Grid grid, double fill = 0.0) : grid_(grid), values_(grid.size(), fill) {}

    Field(Grid grid, std::vector<double> values) : grid_(grid), values_(std::move(values)) {
        if (values_.size() != grid_.size())
            throw DomainError("field length " + std::to_string(values_.size()) +
                              " does not match grid size " + std::to_string(grid_.size()));
    }

    /// Samples f at the cell centers.
    template <class F>
    static Field sample(Grid grid, F&& f) {
        std::vector<double> v(grid.size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(grid.center(i));
        return Field(grid, std::move(v));
    }

    /// Density-role constructor: every value must be strictly positive.
    static Field positive(Grid grid, std::vector<double> values) {
        Field f(grid, std::move(values));
        f.require_positive("density");
        return f;
    }

    void require_positive(const char* what) const {
        for (std::size_t i = 0; i < values_.size(); ++i)
            if (!(values_[i] > 0.0) || !std::isfinite(values_[i]))
                throw PositivityLoss(i, std::string(what) + " must be strictly positive and finite");
    }

    const Grid& grid() const noexcept { return grid_; }
    std::size_t size() const noexcept { return values_.size(); }

    double operator[](std::size_t i) const noexcept { return values_[i]; }
    double& operator[](std::size_t i) noexcept { return values_[i]; }

    /// Periodic access.
    double at(std::ptrdiff_t i) const noexcept { return values_[grid_.wrap(i)]; }

    std::span<const double> values() const noexcept { return values_; }
    std::span<double> values() noexcept { return values_; }
    std::vector<double>& data() noexcept { return values_; }
    const std::vector<double>& data() const noexcept { return values_; }

    double min() const { return *std::min_element(values_.begin(), values_.end()); }
    double max() const { return *std::max_element(values_.begin(), values_.end()); }
    std::size_t argmin() const {
        return static_cast<std::size_t>(std::min_element(values_.begin(), values_.end()) - values_.begin());
    }
    std::size_t argmax() const {
        return static_cast<std::size_t>(std::max_element(values_.begin(), values_.end()) - values_.begin());
    }

    friend bool operator==(const Field&, const Field&) = default;

private:
    Grid grid_;
    std::vector<double> values_;
};

/// Discrete analogue of the integral over the domain: dx * sum(values).
inline double integrate(const Field& f) {
    return f.grid().dx() * std::accumulate(f.values().begin(), f.values().end(), 0.0);
}

/// Circular shift: result[i] = f[i - cells].
inline Field shift(const Field& f, std::ptrdiff_t cells) {
    Field out(f.grid());
    for (std::size_t i = 0; i < f.size(); ++i)
        out[f.grid().wrap(static_cast<std::ptrdiff_t>(i) + cells)] = f[i];
    return out;
}

inline double max_abs_difference(const Field& a, const Field& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

/// Formats with 17 significant digits so values round-trip exactly.
inline std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// CSV rows `x_center,value`.
inline void write_csv(std::ostream& os, const Field& f, const char* value_name = "value") {
    os << "x," << value_name << '\n';
    for (std::size_t i = 0; i < f.size(); ++i)
        os << format_real(f.grid().center(i)) << ',' << format_real(f[i]) << '\n';
}

}  // namespace mechanotaxis
