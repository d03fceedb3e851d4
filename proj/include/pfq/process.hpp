#pragma once

#include "pfq/random.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pfq {

enum class Family { BrownianMotion, BrownianBridge, OrnsteinUhlenbeck, FractionalBrownianMotion };

std::string family_name(Family f);
// Accepts canonical names and the short aliases bm, bb, ou, fbm.
Family parse_family(const std::string& name);

struct ProcessSpec {
    Family family = Family::BrownianMotion;
    double T = 1.0;
    double theta = 0.0;
    double sigma = 0.0;
    double sigma0 = 0.0;
    double hurst = 0.0;

    static ProcessSpec brownian_motion(double T = 1.0);
    static ProcessSpec brownian_bridge(double T = 1.0);
    static ProcessSpec ornstein_uhlenbeck(double theta, double sigma, double sigma0, double T = 1.0);
    static ProcessSpec fractional_brownian_motion(double hurst, double T = 1.0);

    // Throws DomainError when the parameters violate the family's constraints.
    void validate() const;
    bool is_semimartingale() const noexcept { return family != Family::FractionalBrownianMotion; }
    bool operator==(const ProcessSpec&) const = default;
};

class TimeGrid {
public:
    TimeGrid() = default;
    explicit TimeGrid(std::vector<double> points);

    static TimeGrid uniform(double t_end, std::size_t n_points);

    std::size_t size() const noexcept { return points_.size(); }
    double operator[](std::size_t k) const { return points_[k]; }
    double back() const { return points_.back(); }
    std::span<const double> points() const noexcept { return points_; }
    // Trapezoid weights for integrating grid-sampled functions over [0, back()].
    std::vector<double> trapezoid_weights() const;

private:
    std::vector<double> points_;
};

struct Path {
    TimeGrid grid;
    std::vector<double> values;
};

double covariance(const ProcessSpec& spec, double s, double t);
double quadratic_variation(const ProcessSpec& spec, double t);

// Integral over [t, T] of u -> covariance(spec, u, x).
double covariance_primitive(const ProcessSpec& spec, double t, double x);

// Integral over [0, T] of covariance(spec, t, t).
double covariance_trace(const ProcessSpec& spec);

Eigen::MatrixXd covariance_matrix(const ProcessSpec& spec, std::span<const double> times);

// Exact Gaussian simulation on a fixed grid. Precomputes whatever the
// family needs (transition coefficients, or a factorization for fBm) so
// repeated draws are cheap.
class PathSampler {
public:
    PathSampler(const ProcessSpec& spec, const TimeGrid& grid);

    void sample_into(std::span<double> out, Rng& rng) const;
    Path sample(Rng& rng) const;

    const TimeGrid& grid() const noexcept { return grid_; }
    const ProcessSpec& spec() const noexcept { return spec_; }

private:
    ProcessSpec spec_;
    TimeGrid grid_;
    std::vector<double> decay_;
    std::vector<double> step_sd_;
    double tail_sd_ = 0.0;
    Eigen::MatrixXd factor_;
};

Path sample_path(const ProcessSpec& spec, const TimeGrid& grid, Rng& rng);

double ou_sq_covariance_integral(double theta, double sigma, double T);
double phi_theta(double theta, double sigma, double T);

struct NormEquivalence {
    double c = 0.0;
    double C = 0.0;
    double K = 0.0;
};
NormEquivalence ou_norm_equivalence_constants(double theta, double sigma, double sigma0, double T);

} // namespace pfq
