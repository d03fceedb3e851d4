#pragma once

#include "pfq/kl_basis.hpp"
#include "pfq/process.hpp"
#include "pfq/random.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace pfq {

// Conditioning of X on Z_T^i = int_0^T f_i dX = z_i.
struct BridgeSpec {
    ProcessSpec spec;
    std::vector<std::function<double(double)>> functions;
    std::vector<double> endpoint;

    std::size_t size() const noexcept { return functions.size(); }
    // Semimartingale family, matching sizes, and a Gram matrix at s = 0 with
    // condition number below 1e12.
    void validate() const;
};

// Bridge with f_i = antiderivatives of the K-L eigenfunctions in I.
BridgeSpec kl_bridge_spec(const KLBasis& basis, const IndexSet& I, std::vector<double> endpoint);

struct GramMatrix {
    double s = 0.0;
    double T = 0.0;
    Eigen::MatrixXd entries;
};

// Q(s,T). BM: Gauss-Legendre quadrature of int_s^T f_i f_j dt on `resolution`
// nodes. BB and OU: sum_{a,b} f_i f_j cov(dG_a, dG_b) over `resolution` steps,
// G_u = X_u - E[X_u | X_s], with f evaluated at step midpoints.
GramMatrix gram_Q(const BridgeSpec& bridge, double s, std::size_t resolution = 512);

// The bilinear form for any semimartingale family, BM included.
GramMatrix gram_Q_increments(const BridgeSpec& bridge, double s, std::size_t resolution = 512);

struct HCheck {
    double s = 0.0;
    double min_singular_value = 0.0;
    double condition_number = 0.0;
    bool pass = false;
};

// Invertibility of Q(s,T) at each s: smallest singular value above 1e-10 times the largest.
std::vector<HCheck> check_H(const BridgeSpec& bridge, std::span<const double> s_grid,
                            std::size_t resolution = 512);

// cov(X_s, X_t) - sum_{i in I} lambda_i e_i(s) e_i(t).
double conditional_covariance(const KLBasis& basis, const IndexSet& I, double s, double t);

// Draws from L(X | Y_i = y_i, i in I): X + sum_i (y_i - Y_i) e_i with Y_i by
// trapezoid projection on the grid.
class KLBridgeSampler {
public:
    KLBridgeSampler(const KLBasis& basis, const IndexSet& I, const TimeGrid& grid);

    void sample_into(std::span<const double> ybar, std::span<double> out, Rng& rng) const;
    Path sample(std::span<const double> ybar, Rng& rng) const;

    const CoordinateProjector& projector() const noexcept { return proj_; }

private:
    PathSampler sampler_;
    CoordinateProjector proj_;
};

Path kl_bridge_sample(const KLBasis& basis, const IndexSet& I, std::span<const double> ybar, const TimeGrid& grid,
                      Rng& rng);

// Drift density of the bridge w.r.t. d<X> at time s = history.grid.back():
// sum_i f_i(s) sum_j (Q(s,T)^{-1})_{ij} (z_j - E[Z_T^j | F_s]), the
// conditional mean taken as the left-point sum of f_j dX over the history.
double canonical_drift(const BridgeSpec& bridge, const Path& history, std::size_t resolution = 512);

// Euler scheme for the bridge SDE of a Brownian motion. Q(t_k,T)^{-1} is
// precomputed at every grid point.
class BridgeSdeSampler {
public:
    BridgeSdeSampler(BridgeSpec bridge, const TimeGrid& grid, std::size_t resolution = 512);

    void sample_into(std::span<double> out, Rng& rng) const;
    Path sample(Rng& rng) const;

    const TimeGrid& grid() const noexcept { return grid_; }

private:
    BridgeSpec bridge_;
    TimeGrid grid_;
    // f_i(t_k), column k
    Eigen::MatrixXd f_;
    std::vector<Eigen::MatrixXd> q_inv_;
};

Path bridge_sde_sample(const BridgeSpec& bridge, const TimeGrid& grid, Rng& rng);

} // namespace pfq
