#pragma once

#include "pfq/random.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace pfq {

// Quantizer of a centered Gaussian vector with independent N(0, lambda_j)
// coordinates.
struct Codebook {
    std::size_t d = 0;
    std::vector<double> lambdas;
    // N points, row-major (point k occupies [k*d, (k+1)*d)).
    std::vector<double> points;
    std::vector<double> weights;
    // E min_k |Z - gamma_k|^2: exact cell moments in 1-D, held-out Monte Carlo otherwise.
    double distortion = 0.0;
    double distortion_se = 0.0;
    // Second certificate: Gauss-Legendre cell quadrature in 1-D, the training
    // cloud for Monte Carlo designs, the 1-D factors for product codebooks.
    double distortion_alt = 0.0;
    std::string method;
    std::uint64_t seed = 0;

    std::size_t size() const noexcept { return weights.size(); }
    std::span<const double> point(std::size_t k) const { return {points.data() + k * d, d}; }

    // Throws DomainError on inconsistent sizes, weights not summing to one
    // or repeated points.
    void validate() const;
};

// Index of the nearest point; ties go to the lowest index.
std::size_t nearest_neighbor(const Codebook& cb, std::span<const double> y);
// Same, also returning the squared distance.
std::size_t nearest_neighbor(const Codebook& cb, std::span<const double> y, double& dist2);

// Optimal quadratic quantizer of N(0, lambda): Newton on the stationarity
// system with closed-form Gaussian cell moments, distortion cross-checked by
// quad_nodes-point Gauss-Legendre on every cell.
Codebook lloyd_1d(double lambda, std::size_t N, std::size_t quad_nodes = 64);

struct LloydOptions {
    std::size_t max_iterations = 20000;
    double rel_tol = 1e-9;
    // Also stop once no centroid moves more than move_tol times the largest
    // cloud coordinate.
    double move_tol = 1e-5;
    // k-means++ restarts besides the product-quantizer start.
    std::size_t restarts = 2;
    std::size_t workers = 1;
};

// Randomized Lloyd on a fixed Monte Carlo cloud of `samples` draws.
Codebook lloyd_md(std::span<const double> lambdas, std::size_t N, std::size_t samples, Rng& rng,
                  const LloydOptions& opts = {});

// Lloyd on a fixed cloud starting from `initial` (N points, row-major).
Codebook lloyd_md_from(std::span<const double> lambdas, std::span<const double> initial, std::size_t samples,
                       Rng& rng, const LloydOptions& opts = {});

// Competitive learning with step c / (c + k), then five Lloyd sweeps.
Codebook clvq(std::span<const double> lambdas, std::size_t N, std::size_t steps, Rng& rng,
              std::size_t workers = 1);

// Best tensor product of 1-D optimal quantizers with prod N_j <= N_budget.
Codebook product_quantizer(std::span<const double> lambdas, std::size_t N_budget);

// Allocation (N_1, ..., N_d) chosen by product_quantizer.
std::vector<std::size_t> product_allocation(std::span<const double> lambdas, std::size_t N_budget);

// Distortion of the standard normal's optimal N-point quantizer (cached).
double unit_distortion(std::size_t N);

struct StationarityReport {
    // max_k |gamma_k - sample mean of cell k|
    double residual = 0.0;
    // max_k sqrt(trace Cov(Z | cell k) / n_k), the scale of that residual.
    double standard_error = 0.0;
    std::vector<std::size_t> missing_cells;
};

StationarityReport stationarity_residual(const Codebook& cb, std::size_t samples, Rng& rng,
                                         std::size_t workers = 1);

enum class ZadorMode { Uniform, Gaussian };

struct ZadorReport {
    double slope = 0.0;
    double slope_se = 0.0;
    // exp(intercept) of the log-log fit of E_{N,r} = (distortion)^{1/r}.
    double constant = 0.0;
    // Asymptotic prediction for the constant (uniform mode only).
    double reference = 0.0;
    std::vector<double> errors;
};

// Zador constant J_{r,1} = (1/2) (r + 1)^{-1/r}.
double zador_constant_1d(double r);
// sqrt(5 / (18 sqrt(2))), the two-dimensional quadratic constant as displayed.
double zador_constant_2d_quadratic();

// Uniform mode: midpoint quantizers of U[0,1], whose L^r error is exact.
// Gaussian mode: lloyd_1d(lambda, N) with L^r error by cell quadrature.
ZadorReport zador_rate_check(ZadorMode mode, double lambda, double r, std::span<const std::size_t> Ns);

} // namespace pfq
