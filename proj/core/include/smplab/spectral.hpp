#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "smplab/error.hpp"

namespace smplab {

/// Coefficients of an element of H = L²(0,1) in the Neumann cosine basis
/// e_0 = 1, e_k = √2 cos(kπx). Parseval makes the H-norm the Euclidean norm
/// of the coefficients.
class ModalVector {
public:
    ModalVector() = default;
    explicit ModalVector(std::size_t n, double value = 0.0) : c_(n, value) {}
    explicit ModalVector(std::vector<double> coeffs) : c_(std::move(coeffs)) {}

    static ModalVector unit(std::size_t n, std::size_t k) {
        ModalVector v(n);
        v[k] = 1.0;
        return v;
    }

    [[nodiscard]] std::size_t size() const noexcept { return c_.size(); }
    [[nodiscard]] double& operator[](std::size_t k) { return c_[k]; }
    [[nodiscard]] double operator[](std::size_t k) const { return c_[k]; }
    [[nodiscard]] std::span<double> span() noexcept { return c_; }
    [[nodiscard]] std::span<const double> span() const noexcept { return c_; }
    [[nodiscard]] const std::vector<double>& coeffs() const noexcept { return c_; }

    [[nodiscard]] double squared_norm() const noexcept {
        double s = 0.0;
        for (double x : c_) s += x * x;
        return s;
    }
    [[nodiscard]] double norm() const noexcept { return std::sqrt(squared_norm()); }

    /// Copy with length `n`: truncated or zero-padded.
    [[nodiscard]] ModalVector resized(std::size_t n) const {
        ModalVector out(n);
        for (std::size_t k = 0; k < std::min(n, c_.size()); ++k) out[k] = c_[k];
        return out;
    }

    ModalVector& operator+=(const ModalVector& o);
    ModalVector& operator-=(const ModalVector& o);
    ModalVector& operator*=(double a) noexcept {
        for (double& x : c_) x *= a;
        return *this;
    }

    friend bool operator==(const ModalVector&, const ModalVector&) = default;

private:
    std::vector<double> c_;
};

[[nodiscard]] inline ModalVector operator+(ModalVector a, const ModalVector& b) { return a += b; }
[[nodiscard]] inline ModalVector operator-(ModalVector a, const ModalVector& b) { return a -= b; }
[[nodiscard]] inline ModalVector operator*(double s, ModalVector a) { return a *= s; }
[[nodiscard]] double dot(std::span<const double> a, std::span<const double> b);
[[nodiscard]] inline double dot(const ModalVector& a, const ModalVector& b) { return dot(a.span(), b.span()); }

enum class Side { left, right };

[[nodiscard]] const char* to_string(Side side) noexcept;

/// Modal form of one Neumann map d^i (flux 1 on `side`, 0 on the other) and
/// of (λ−A)D applied to a unit boundary input.
struct BoundaryMap {
    Side side = Side::left;
    std::vector<double> d_coeffs;  ///< d̂_k
    std::vector<double> b_coeffs;  ///< b_k = (λ−μ_k)·d̂_k
};

/// Truncated eigen-expansion of the Neumann Laplacian on (0,1) together with
/// the cosine transforms between modal coefficients and samples on the
/// midpoint grid x_j = (j+½)/M. Immutable and cheap to copy; the transform
/// plans are shared and safe to use from several threads at once.
class SpectralBasis {
public:
    SpectralBasis(std::size_t n_modes, double lambda, std::size_t grid_size);

    [[nodiscard]] std::size_t n_modes() const noexcept { return n_modes_; }
    [[nodiscard]] std::size_t grid_size() const noexcept { return grid_size_; }
    [[nodiscard]] double lambda() const noexcept { return lambda_; }
    [[nodiscard]] double eigenvalue(std::size_t k) const { return eigenvalues_.at(k); }
    [[nodiscard]] std::span<const double> eigenvalues() const noexcept { return eigenvalues_; }
    [[nodiscard]] std::span<const double> grid_points() const noexcept { return grid_points_; }
    /// Weight of every node in the midpoint quadrature.
    [[nodiscard]] double quadrature_weight() const noexcept { return 1.0 / static_cast<double>(grid_size_); }

    [[nodiscard]] static double eigenfunction(std::size_t k, double x);

    /// modal (length N) -> grid samples (length M).
    void to_grid(std::span<const double> modal, std::span<double> grid) const;
    /// grid samples (length M) -> first N modal coefficients (L² projection
    /// under the midpoint rule).
    void to_modal(std::span<const double> grid, std::span<double> modal) const;

private:
    struct Plans;

    std::size_t n_modes_;
    std::size_t grid_size_;
    double lambda_;
    std::vector<double> eigenvalues_;
    std::vector<double> grid_points_;
    std::shared_ptr<const Plans> plans_;
};

/// Validating factory: N ≥ 2, M ≥ 2N (dealiasing headroom), λ > 0.
[[nodiscard]] SpectralBasis build_basis(std::size_t n_modes, double lambda, std::size_t grid_size);

/// e^{tA} v, coefficient-wise e^{μ_k t}.
[[nodiscard]] ModalVector semigroup_apply(const SpectralBasis& basis, double t, const ModalVector& v);

/// (λ−A)^σ v, coefficient-wise (λ−μ_k)^σ. σ may be negative.
[[nodiscard]] ModalVector fractional_apply(const SpectralBasis& basis, double sigma, const ModalVector& v);

/// Explicit solution of d'' = λd with unit flux on `side`:
///   left:  d¹(x) = −cosh(√λ(1−x)) / (√λ sinh√λ)
///   right: d²(x) =  cosh(√λ x)    / (√λ sinh√λ)
[[nodiscard]] double neumann_profile(double lambda, Side side, double x);

/// Modal coefficients of the Neumann map. Uses the integration-by-parts
/// identity (λ−μ_k)d̂_k = ∓e_k(boundary), so b_k is −e_k(0) on the left and
/// e_k(1) on the right.
[[nodiscard]] BoundaryMap neumann_map(const SpectralBasis& basis, Side side);

/// ‖e^{tA}(λ−A)D‖ on a unit boundary input: sqrt(Σ b_k² e^{2μ_k t}). t > 0.
[[nodiscard]] double smoothing_norm(const SpectralBasis& basis, const BoundaryMap& map, double t);

namespace detail {
[[noreturn]] void throw_non_finite_grid(const SpectralBasis& basis, std::size_t j, double in, double out);
}

/// Pseudo-spectral Nemytskii operator: v -> grid, f pointwise, -> first N
/// modes. Dealiasing comes from the M ≥ 2N grid; polynomial nonlinearities of
/// degree above two are not alias-free at M = 2N.
template <typename Fn>
[[nodiscard]] ModalVector nemytskii_apply(const SpectralBasis& basis, Fn&& f, const ModalVector& v) {
    if (v.size() != basis.n_modes())
        throw Error(ErrorCode::invalid_argument, "nemytskii_apply: vector length does not match basis");
    std::vector<double> grid(basis.grid_size());
    basis.to_grid(v.span(), grid);
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const double in = grid[j];
        grid[j] = f(in);
        if (!std::isfinite(grid[j])) detail::throw_non_finite_grid(basis, j, in, grid[j]);
    }
    ModalVector out(basis.n_modes());
    basis.to_modal(grid, out.span());
    return out;
}

}  // namespace smplab
