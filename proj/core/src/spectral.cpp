#include "smplab/spectral.hpp"

#include <fftw3.h>

#include <mutex>
#include <numbers>
#include <sstream>

namespace smplab {

namespace {

// FFTW's planner is not thread-safe; execution of an existing plan on new
// arrays is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

thread_local std::vector<double> tls_in;
thread_local std::vector<double> tls_out;

}  // namespace

const char* to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::invalid_argument: return "invalid_argument";
        case ErrorCode::grid_mismatch: return "grid_mismatch";
        case ErrorCode::lineage_mismatch: return "lineage_mismatch";
        case ErrorCode::non_finite: return "non_finite";
        case ErrorCode::blow_up: return "blow_up";
        case ErrorCode::rank_deficient: return "rank_deficient";
        case ErrorCode::not_applicable: return "not_applicable";
        case ErrorCode::hypothesis_failed: return "hypothesis_failed";
        case ErrorCode::optimizer_diverged: return "optimizer_diverged";
        case ErrorCode::config: return "config";
    }
    return "unknown";
}

const char* to_string(Side side) noexcept { return side == Side::left ? "left" : "right"; }

ModalVector& ModalVector::operator+=(const ModalVector& o) {
    if (o.size() != size()) throw Error(ErrorCode::invalid_argument, "ModalVector size mismatch");
    for (std::size_t k = 0; k < c_.size(); ++k) c_[k] += o.c_[k];
    return *this;
}

ModalVector& ModalVector::operator-=(const ModalVector& o) {
    if (o.size() != size()) throw Error(ErrorCode::invalid_argument, "ModalVector size mismatch");
    for (std::size_t k = 0; k < c_.size(); ++k) c_[k] -= o.c_[k];
    return *this;
}

double dot(std::span<const double> a, std::span<const double> b) {
    const std::size_t n = std::min(a.size(), b.size());
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += a[k] * b[k];
    return s;
}

struct SpectralBasis::Plans {
    fftw_plan inverse = nullptr;  // REDFT01: modal -> grid
    fftw_plan forward = nullptr;  // REDFT10: grid -> modal

    explicit Plans(std::size_t m) {
        std::vector<double> a(m), b(m);
        const int n = static_cast<int>(m);
        std::lock_guard lock(planner_mutex());
        inverse = fftw_plan_r2r_1d(n, a.data(), b.data(), FFTW_REDFT01, FFTW_ESTIMATE | FFTW_UNALIGNED);
        forward = fftw_plan_r2r_1d(n, a.data(), b.data(), FFTW_REDFT10, FFTW_ESTIMATE | FFTW_UNALIGNED);
    }
    Plans(const Plans&) = delete;
    Plans& operator=(const Plans&) = delete;
    ~Plans() {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(inverse);
        fftw_destroy_plan(forward);
    }
};

SpectralBasis::SpectralBasis(std::size_t n_modes, double lambda, std::size_t grid_size)
    : n_modes_(n_modes), grid_size_(grid_size), lambda_(lambda) {
    if (n_modes < 2) throw Error(ErrorCode::invalid_argument, "build_basis: n_modes must be >= 2");
    if (grid_size < 2 * n_modes)
        throw Error(ErrorCode::invalid_argument, "build_basis: grid_size must be >= 2*n_modes (aliasing unsafe)");
    if (!(lambda > 0.0) || !std::isfinite(lambda))
        throw Error(ErrorCode::invalid_argument, "build_basis: lambda must be a positive finite number");

    eigenvalues_.resize(n_modes);
    for (std::size_t k = 0; k < n_modes; ++k) {
        const double kp = static_cast<double>(k) * std::numbers::pi;
        eigenvalues_[k] = -kp * kp;
    }
    grid_points_.resize(grid_size);
    for (std::size_t j = 0; j < grid_size; ++j)
        grid_points_[j] = (static_cast<double>(j) + 0.5) / static_cast<double>(grid_size);
    plans_ = std::make_shared<const Plans>(grid_size);
}

double SpectralBasis::eigenfunction(std::size_t k, double x) {
    if (k == 0) return 1.0;
    return std::numbers::sqrt2 * std::cos(static_cast<double>(k) * std::numbers::pi * x);
}

void SpectralBasis::to_grid(std::span<const double> modal, std::span<double> grid) const {
    if (modal.size() != n_modes_ || grid.size() != grid_size_)
        throw Error(ErrorCode::invalid_argument, "to_grid: size mismatch");
    // REDFT01: Y_j = X_0 + 2 Σ_{k≥1} X_k cos(πk(j+½)/M)
    tls_in.assign(grid_size_, 0.0);
    tls_in[0] = modal[0];
    constexpr double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
    for (std::size_t k = 1; k < n_modes_; ++k) tls_in[k] = modal[k] * inv_sqrt2;
    fftw_execute_r2r(plans_->inverse, tls_in.data(), grid.data());
}

void SpectralBasis::to_modal(std::span<const double> grid, std::span<double> modal) const {
    if (modal.size() != n_modes_ || grid.size() != grid_size_)
        throw Error(ErrorCode::invalid_argument, "to_modal: size mismatch");
    // REDFT10: Y_k = 2 Σ_j y_j cos(πk(j+½)/M)
    tls_in.assign(grid.begin(), grid.end());
    tls_out.resize(grid_size_);
    fftw_execute_r2r(plans_->forward, tls_in.data(), tls_out.data());
    const double scale = 1.0 / (2.0 * static_cast<double>(grid_size_));
    modal[0] = tls_out[0] * scale;
    for (std::size_t k = 1; k < n_modes_; ++k) modal[k] = tls_out[k] * scale * std::numbers::sqrt2;
}

SpectralBasis build_basis(std::size_t n_modes, double lambda, std::size_t grid_size) {
    return SpectralBasis(n_modes, lambda, grid_size);
}

ModalVector semigroup_apply(const SpectralBasis& basis, double t, const ModalVector& v) {
    if (!(t >= 0.0)) throw Error(ErrorCode::invalid_argument, "semigroup_apply: t must be >= 0");
    if (v.size() != basis.n_modes()) throw Error(ErrorCode::invalid_argument, "semigroup_apply: size mismatch");
    ModalVector out = v;
    for (std::size_t k = 1; k < out.size(); ++k) out[k] *= std::exp(basis.eigenvalue(k) * t);
    return out;
}

ModalVector fractional_apply(const SpectralBasis& basis, double sigma, const ModalVector& v) {
    if (v.size() != basis.n_modes()) throw Error(ErrorCode::invalid_argument, "fractional_apply: size mismatch");
    ModalVector out = v;
    for (std::size_t k = 0; k < out.size(); ++k) out[k] *= std::pow(basis.lambda() - basis.eigenvalue(k), sigma);
    return out;
}

double neumann_profile(double lambda, Side side, double x) {
    const double r = std::sqrt(lambda);
    const double denom = r * std::sinh(r);
    return side == Side::left ? -std::cosh(r * (1.0 - x)) / denom : std::cosh(r * x) / denom;
}

BoundaryMap neumann_map(const SpectralBasis& basis, Side side) {
    BoundaryMap map;
    map.side = side;
    const std::size_t n = basis.n_modes();
    map.b_coeffs.resize(n);
    map.d_coeffs.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        // −e_k(0) on the left, e_k(1) = √2(−1)^k on the right; exact signs
        // instead of a rounded cos(kπ)
        double b = k == 0 ? 1.0 : std::numbers::sqrt2;
        if (side == Side::left) b = -b;
        else if (k % 2 == 1) b = -b;
        map.b_coeffs[k] = b;
        map.d_coeffs[k] = b / (basis.lambda() - basis.eigenvalue(k));
    }
    return map;
}

double smoothing_norm(const SpectralBasis& basis, const BoundaryMap& map, double t) {
    if (!(t > 0.0)) throw Error(ErrorCode::invalid_argument, "smoothing_norm: t must be > 0");
    double s = 0.0;
    for (std::size_t k = 0; k < map.b_coeffs.size(); ++k) {
        const double b = map.b_coeffs[k];
        s += b * b * std::exp(2.0 * basis.eigenvalue(k) * t);
    }
    return std::sqrt(s);
}

namespace detail {
void throw_non_finite_grid(const SpectralBasis& basis, std::size_t j, double in, double out) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "nemytskii_apply: non-finite value " << out << " at grid point " << j << " (x = "
        << basis.grid_points()[j] << ", input " << in << ")";
    throw Error(ErrorCode::non_finite, msg.str());
}
}  // namespace detail

}  // namespace smplab
