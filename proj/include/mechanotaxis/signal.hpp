#pragma once

#include "mechanotaxis/errors.hpp"
#include "mechanotaxis/grid.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace mechanotaxis {

struct SignalParams {
    double Ds = 0.01;

    void validate() const {
        if (!(Ds > 0.0) || !std::isfinite(Ds)) throw DomainError("signal diffusion Ds must be > 0");
    }
};

/// Continuous Fourier symbol of (1 - Ds*Laplacian)^{-1}: 1 / (1 + Ds k^2).
inline double fourier_symbol(const SignalParams& params, double k) {
    return 1.0 / (1.0 + params.Ds * k * k);
}

/// Symbol of the centered second difference, (2 - 2cos(k dx)) / dx^2.
inline double discrete_laplacian_symbol(double k, double dx) {
    return (2.0 - 2.0 * std::cos(k * dx)) / (dx * dx);
}

/// Direct solver for -Ds (S_{i-1} - 2 S_i + S_{i+1}) / dx^2 + S_i = rho_i with
/// periodic wrap. The cyclic tridiagonal system is handled by a Thomas
/// factorization of the de-cornered matrix plus a Sherman-Morrison rank-one
/// correction, both precomputed once per (grid, Ds). O(I) per solve.
class HelmholtzSolver {
public:
    HelmholtzSolver(const Grid& grid, SignalParams params) : grid_(grid), params_(params) {
        params_.validate();
        const std::size_t n = grid.size();
        const double dx = grid.dx();
        off_ = -params_.Ds / (dx * dx);
        diag_ = 1.0 + 2.0 * params_.Ds / (dx * dx);

        // corners: A[0][n-1] = A[n-1][0] = off_
        gamma_ = -diag_;
        std::vector<double> b(n, diag_);
        b[0] = diag_ - gamma_;
        b[n - 1] = diag_ - off_ * off_ / gamma_;

        cprime_.resize(n);
        inv_denom_.resize(n);
        inv_denom_[0] = 1.0 / b[0];
        cprime_[0] = off_ * inv_denom_[0];
        for (std::size_t i = 1; i < n; ++i) {
            const double denom = b[i] - off_ * cprime_[i - 1];
            inv_denom_[i] = 1.0 / denom;
            cprime_[i] = off_ * inv_denom_[i];
        }

        std::vector<double> u(n, 0.0);
        u[0] = gamma_;
        u[n - 1] = off_;
        z_ = thomas(u);
        z_factor_ = 1.0 + z_[0] + off_ * z_[n - 1] / gamma_;
    }

    Field solve(const Field& rho) const {
        Field out(grid_);
        solve_into(rho.values(), out.values());
        return out;
    }

    /// Allocation-free variant for the time loop.
    void solve_into(std::span<const double> rho, std::span<double> out) const {
        const std::size_t n = grid_.size();
        // forward sweep
        out[0] = rho[0] * inv_denom_[0];
        for (std::size_t i = 1; i < n; ++i) out[i] = (rho[i] - off_ * out[i - 1]) * inv_denom_[i];
        for (std::size_t i = n - 1; i-- > 0;) out[i] -= cprime_[i] * out[i + 1];
        const double fact = (out[0] + off_ * out[n - 1] / gamma_) / z_factor_;
        for (std::size_t i = 0; i < n; ++i) out[i] -= fact * z_[i];
    }

    /// Applies the operator; used for residual checks.
    Field apply(const Field& S) const {
        Field out(grid_);
        const auto n = static_cast<std::ptrdiff_t>(grid_.size());
        for (std::ptrdiff_t i = 0; i < n; ++i)
            out[static_cast<std::size_t>(i)] = off_ * S.at(i - 1) + diag_ * S.at(i) + off_ * S.at(i + 1);
        return out;
    }

    const Grid& grid() const noexcept { return grid_; }
    const SignalParams& params() const noexcept { return params_; }

private:
    std::vector<double> thomas(const std::vector<double>& r) const {
        const std::size_t n = r.size();
        std::vector<double> x(n);
        x[0] = r[0] * inv_denom_[0];
        for (std::size_t i = 1; i < n; ++i) x[i] = (r[i] - off_ * x[i - 1]) * inv_denom_[i];
        for (std::size_t i = n - 1; i-- > 0;) x[i] -= cprime_[i] * x[i + 1];
        return x;
    }

    Grid grid_;
    SignalParams params_;
    double off_ = 0.0, diag_ = 0.0, gamma_ = 0.0, z_factor_ = 1.0;
    std::vector<double> cprime_, inv_denom_, z_;
};

/// S = solution of -Ds ΔS + S = rho on the periodic grid.
inline Field solve_signal(const Field& rho, const SignalParams& params) {
    for (std::size_t i = 0; i < rho.size(); ++i)
        if (!std::isfinite(rho[i])) throw DomainError("solve_signal: non-finite density");
    return HelmholtzSolver(rho.grid(), params).solve(rho);
}

/// Periodic convolution kernel sampled on the grid: sample k is the value at
/// offset k*dx (offsets past I/2 represent negative displacements).
class ConvolutionKernel {
public:
    ConvolutionKernel(Grid grid, std::vector<double> samples) : samples_(grid, std::move(samples)) {
        for (std::size_t i = 0; i < samples_.size(); ++i)
            if (!(samples_[i] >= 0.0)) throw DomainError("convolution kernel must be nonnegative");
        const double mass = integrate(samples_);
        if (std::abs(mass - 1.0) > 1e-12)
            throw DomainError("convolution kernel must have unit mass, got " + format_real(mass));
    }

    /// Builds a kernel from arbitrary nonnegative samples, normalized to mass 1.
    static ConvolutionKernel normalized(Grid grid, std::vector<double> samples) {
        double sum = 0.0;
        for (double s : samples) sum += s;
        if (!(sum > 0.0)) throw DomainError("kernel samples must have positive sum");
        for (double& s : samples) s /= sum * grid.dx();
        return ConvolutionKernel(grid, std::move(samples));
    }

    /// Reads one sample per line; the last comma-separated column is used.
    static ConvolutionKernel from_csv(Grid grid, const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open kernel file " + path);
        std::vector<double> samples;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            const auto pos = line.find_last_of(',');
            const std::string cell = pos == std::string::npos ? line : line.substr(pos + 1);
            try {
                samples.push_back(std::stod(cell));
            } catch (const std::exception&) {
                if (samples.empty()) continue;  // header
                throw ConfigError("kernel file " + path + ": bad value '" + cell + "'");
            }
        }
        if (samples.size() != grid.size())
            throw ConfigError("kernel file " + path + " has " + std::to_string(samples.size()) +
                              " samples, grid has " + std::to_string(grid.size()));
        return normalized(grid, std::move(samples));
    }

    const Field& samples() const noexcept { return samples_; }
    const Grid& grid() const noexcept { return samples_.grid(); }

private:
    Field samples_;
};

/// out_i = dx * sum_k K_k rho_{i-k}.
inline Field convolve(const Field& rho, const ConvolutionKernel& K) {
    if (!(rho.grid() == K.grid())) throw DomainError("convolve: kernel and field grids differ");
    const std::size_t n = rho.size();
    const double dx = rho.grid().dx();
    Field out(rho.grid());
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < n; ++k) acc += K.samples()[k] * rho[(i + n - k) % n];
        out[i] = dx * acc;
    }
    return out;
}

}  // namespace mechanotaxis
