#include "pfq/process.hpp"

#include "pfq/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pfq {

std::string family_name(Family f)
{
    switch (f) {
    case Family::BrownianMotion: return "brownian_motion";
    case Family::BrownianBridge: return "brownian_bridge";
    case Family::OrnsteinUhlenbeck: return "ornstein_uhlenbeck";
    case Family::FractionalBrownianMotion: return "fractional_brownian_motion";
    }
    return "unknown";
}

Family parse_family(const std::string& name)
{
    if (name == "bm" || name == "brownian_motion") return Family::BrownianMotion;
    if (name == "bb" || name == "brownian_bridge") return Family::BrownianBridge;
    if (name == "ou" || name == "ornstein_uhlenbeck") return Family::OrnsteinUhlenbeck;
    if (name == "fbm" || name == "fractional_brownian_motion") return Family::FractionalBrownianMotion;
    throw DomainError("unknown process family '" + name + "'");
}

ProcessSpec ProcessSpec::brownian_motion(double T)
{
    ProcessSpec s;
    s.family = Family::BrownianMotion;
    s.T = T;
    s.validate();
    return s;
}

ProcessSpec ProcessSpec::brownian_bridge(double T)
{
    ProcessSpec s;
    s.family = Family::BrownianBridge;
    s.T = T;
    s.validate();
    return s;
}

ProcessSpec ProcessSpec::ornstein_uhlenbeck(double theta, double sigma, double sigma0, double T)
{
    ProcessSpec s;
    s.family = Family::OrnsteinUhlenbeck;
    s.T = T;
    s.theta = theta;
    s.sigma = sigma;
    s.sigma0 = sigma0;
    s.validate();
    return s;
}

ProcessSpec ProcessSpec::fractional_brownian_motion(double hurst, double T)
{
    ProcessSpec s;
    s.family = Family::FractionalBrownianMotion;
    s.T = T;
    s.hurst = hurst;
    s.validate();
    return s;
}

void ProcessSpec::validate() const
{
    if (!(T > 0.0) || !std::isfinite(T)) throw DomainError("process horizon T must be positive");
    if (family == Family::OrnsteinUhlenbeck) {
        if (!(theta > 0.0)) throw DomainError("OU requires theta > 0");
        if (!(sigma > 0.0)) throw DomainError("OU requires sigma > 0");
        if (!(sigma0 >= 0.0)) throw DomainError("OU requires sigma0 >= 0");
    }
    if (family == Family::FractionalBrownianMotion && !(hurst > 0.0 && hurst < 1.0))
        throw DomainError("fBm requires 0 < hurst < 1");
}

TimeGrid::TimeGrid(std::vector<double> points) : points_(std::move(points))
{
    if (points_.size() < 2) throw DomainError("time grid needs at least two points");
    if (points_.front() != 0.0) throw DomainError("time grid must start at 0");
    for (std::size_t k = 1; k < points_.size(); ++k)
        if (!(points_[k] > points_[k - 1])) throw DomainError("time grid must be strictly increasing");
}

TimeGrid TimeGrid::uniform(double t_end, std::size_t n_points)
{
    if (n_points < 2) throw DomainError("time grid needs at least two points");
    if (!(t_end > 0.0)) throw DomainError("time grid end must be positive");
    std::vector<double> pts(n_points);
    const double n = static_cast<double>(n_points - 1);
    for (std::size_t k = 0; k < n_points; ++k) pts[k] = t_end * static_cast<double>(k) / n;
    pts.back() = t_end;
    return TimeGrid(std::move(pts));
}

std::vector<double> TimeGrid::trapezoid_weights() const
{
    std::vector<double> w(points_.size(), 0.0);
    for (std::size_t k = 0; k + 1 < points_.size(); ++k) {
        const double h = 0.5 * (points_[k + 1] - points_[k]);
        w[k] += h;
        w[k + 1] += h;
    }
    return w;
}

namespace {

double check_time(const ProcessSpec& spec, double t)
{
    const double tol = 1e-12 * spec.T;
    if (!(t >= -tol && t <= spec.T + tol)) {
        std::ostringstream os;
        os << "time " << t << " outside [0, " << spec.T << "]";
        throw DomainError(os.str());
    }
    return std::clamp(t, 0.0, spec.T);
}

} // namespace

double covariance(const ProcessSpec& spec, double s, double t)
{
    s = check_time(spec, s);
    t = check_time(spec, t);
    const double lo = std::min(s, t);
    switch (spec.family) {
    case Family::BrownianMotion: return lo;
    case Family::BrownianBridge: return lo - s * t / spec.T;
    case Family::OrnsteinUhlenbeck: {
        // sigma^2/(2 theta) e^{-theta(s+t)} (e^{2 theta min} - 1) rewritten without overflow.
        const double th = spec.theta;
        const double sum = s + t;
        const double diff = std::abs(s - t);
        return spec.sigma * spec.sigma / (2.0 * th) * (std::exp(-th * diff) - std::exp(-th * sum)) +
               spec.sigma0 * spec.sigma0 * std::exp(-th * sum);
    }
    case Family::FractionalBrownianMotion: {
        const double h2 = 2.0 * spec.hurst;
        return 0.5 * (std::pow(s, h2) + std::pow(t, h2) - std::pow(std::abs(s - t), h2));
    }
    }
    return 0.0;
}

double quadratic_variation(const ProcessSpec& spec, double t)
{
    if (!spec.is_semimartingale())
        throw UnsupportedFamilyError("quadratic variation undefined for fractional Brownian motion");
    t = check_time(spec, t);
    if (spec.family == Family::OrnsteinUhlenbeck) return spec.sigma * spec.sigma * t;
    return t;
}

double covariance_primitive(const ProcessSpec& spec, double t, double x)
{
    t = check_time(spec, t);
    x = check_time(spec, x);
    const double T = spec.T;
    auto bm_part = [T](double t, double x) {
        if (x <= t) return x * (T - t);
        return 0.5 * (x * x - t * t) + x * (T - x);
    };
    switch (spec.family) {
    case Family::BrownianMotion: return bm_part(t, x);
    case Family::BrownianBridge: return bm_part(t, x) - x * (T * T - t * t) / (2.0 * T);
    case Family::OrnsteinUhlenbeck: {
        const double th = spec.theta;
        double near;
        if (x <= t) near = (std::exp(-th * (t - x)) - std::exp(-th * (T - x))) / th;
        else near = (2.0 - std::exp(-th * (x - t)) - std::exp(-th * (T - x))) / th;
        const double far = std::exp(-th * x) * (std::exp(-th * t) - std::exp(-th * T)) / th;
        return spec.sigma * spec.sigma / (2.0 * th) * (near - far) + spec.sigma0 * spec.sigma0 * far;
    }
    case Family::FractionalBrownianMotion: {
        const double h2 = 2.0 * spec.hurst;
        const double a = h2 + 1.0;
        double abs_part;
        if (x <= t) abs_part = (std::pow(T - x, a) - std::pow(t - x, a)) / a;
        else abs_part = (std::pow(x - t, a) + std::pow(T - x, a)) / a;
        return 0.5 * ((std::pow(T, a) - std::pow(t, a)) / a + std::pow(x, h2) * (T - t) - abs_part);
    }
    }
    return 0.0;
}

double covariance_trace(const ProcessSpec& spec)
{
    const double T = spec.T;
    switch (spec.family) {
    case Family::BrownianMotion: return 0.5 * T * T;
    case Family::BrownianBridge: return T * T / 6.0;
    case Family::OrnsteinUhlenbeck: {
        const double th = spec.theta;
        const double decay = -std::expm1(-2.0 * th * T) / (2.0 * th);
        return spec.sigma * spec.sigma / (2.0 * th) * (T - decay) + spec.sigma0 * spec.sigma0 * decay;
    }
    case Family::FractionalBrownianMotion: {
        const double a = 2.0 * spec.hurst + 1.0;
        return std::pow(T, a) / a;
    }
    }
    return 0.0;
}

Eigen::MatrixXd covariance_matrix(const ProcessSpec& spec, std::span<const double> times)
{
    const auto n = static_cast<Eigen::Index>(times.size());
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) K(i, j) = K(j, i) = covariance(spec, times[i], times[j]);
    return K;
}

PathSampler::PathSampler(const ProcessSpec& spec, const TimeGrid& grid) : spec_(spec), grid_(grid)
{
    spec_.validate();
    if (grid_.size() < 2) throw DomainError("path sampler needs a grid");
    if (grid_.back() > spec_.T * (1.0 + 1e-12)) throw DomainError("grid extends beyond the horizon T");

    const std::size_t n = grid_.size();
    switch (spec_.family) {
    case Family::BrownianMotion:
    case Family::BrownianBridge:
        step_sd_.resize(n, 0.0);
        for (std::size_t k = 1; k < n; ++k) step_sd_[k] = std::sqrt(grid_[k] - grid_[k - 1]);
        tail_sd_ = std::sqrt(std::max(0.0, spec_.T - grid_.back()));
        break;
    case Family::OrnsteinUhlenbeck: {
        decay_.resize(n, 0.0);
        step_sd_.resize(n, 0.0);
        const double th = spec_.theta;
        const double s2 = spec_.sigma * spec_.sigma;
        for (std::size_t k = 1; k < n; ++k) {
            const double dt = grid_[k] - grid_[k - 1];
            decay_[k] = std::exp(-th * dt);
            step_sd_[k] = std::sqrt(-s2 * std::expm1(-2.0 * th * dt) / (2.0 * th));
        }
        break;
    }
    case Family::FractionalBrownianMotion: {
        const Eigen::MatrixXd K = covariance_matrix(spec_, grid_.points());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(K);
        if (eig.info() != Eigen::Success) throw NumericalError("fBm covariance eigendecomposition failed");
        Eigen::VectorXd ev = eig.eigenvalues();
        const double top = ev.maxCoeff();
        for (Eigen::Index i = 0; i < ev.size(); ++i) {
            if (ev(i) < -1e-12 * top) {
                std::ostringstream os;
                os << "fBm covariance not positive semidefinite (eigenvalue " << ev(i) << ")";
                throw NumericalError(os.str());
            }
            ev(i) = std::max(ev(i), 0.0);
        }
        factor_ = eig.eigenvectors() * ev.cwiseSqrt().asDiagonal();
        break;
    }
    }
}

void PathSampler::sample_into(std::span<double> out, Rng& rng) const
{
    const std::size_t n = grid_.size();
    if (out.size() != n) throw DomainError("path buffer size does not match the grid");
    switch (spec_.family) {
    case Family::BrownianMotion: {
        out[0] = 0.0;
        for (std::size_t k = 1; k < n; ++k) out[k] = out[k - 1] + step_sd_[k] * rng.normal();
        break;
    }
    case Family::BrownianBridge: {
        out[0] = 0.0;
        for (std::size_t k = 1; k < n; ++k) out[k] = out[k - 1] + step_sd_[k] * rng.normal();
        const double wT = out[n - 1] + (tail_sd_ > 0.0 ? tail_sd_ * rng.normal() : 0.0);
        for (std::size_t k = 0; k < n; ++k) out[k] -= grid_[k] / spec_.T * wT;
        break;
    }
    case Family::OrnsteinUhlenbeck: {
        out[0] = spec_.sigma0 * rng.normal();
        for (std::size_t k = 1; k < n; ++k) out[k] = decay_[k] * out[k - 1] + step_sd_[k] * rng.normal();
        break;
    }
    case Family::FractionalBrownianMotion: {
        Eigen::VectorXd xi(static_cast<Eigen::Index>(n));
        for (auto& v : xi) v = rng.normal();
        Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(n)) = factor_ * xi;
        break;
    }
    }
}

Path PathSampler::sample(Rng& rng) const
{
    Path path{grid_, std::vector<double>(grid_.size())};
    sample_into(path.values, rng);
    return path;
}

Path sample_path(const ProcessSpec& spec, const TimeGrid& grid, Rng& rng)
{
    return PathSampler(spec, grid).sample(rng);
}

namespace {

void check_ou_params(double theta, double sigma, double T)
{
    if (!(theta > 0.0) || !(sigma > 0.0) || !(T > 0.0))
        throw DomainError("OU identities need theta, sigma, T > 0");
}

// -5 + 4x + 8x e^{-2x} + 4e^{-2x} + e^{-4x}; its Taylor expansion starts at (8/3) x^4.
double ou_bracket(double x)
{
    if (x < 0.1) {
        double sum = 0.0;
        for (int k = 4; k < 40; ++k) {
            const double c = 8.0 * std::pow(-2.0, k - 1) / std::tgamma(k) +
                             (4.0 * std::pow(-2.0, k) + std::pow(-4.0, k)) / std::tgamma(k + 1.0);
            const double term = c * std::pow(x, k);
            sum += term;
            if (std::abs(term) < 1e-18 * std::abs(sum)) break;
        }
        return sum;
    }
    const double e2 = std::exp(-2.0 * x);
    return -5.0 + 4.0 * x + 8.0 * x * e2 + 4.0 * e2 + e2 * e2;
}

} // namespace

double ou_sq_covariance_integral(double theta, double sigma, double T)
{
    check_ou_params(theta, sigma, T);
    const double s2 = sigma * sigma;
    const double th2 = theta * theta;
    return s2 * s2 / (16.0 * th2 * th2) * ou_bracket(theta * T);
}

double phi_theta(double theta, double sigma, double T)
{
    check_ou_params(theta, sigma, T);
    const double r = sigma * sigma / (theta * theta);
    return ou_sq_covariance_integral(theta, sigma, T) - r * r;
}

NormEquivalence ou_norm_equivalence_constants(double theta, double sigma, double sigma0, double T)
{
    check_ou_params(theta, sigma, T);
    if (!(sigma0 >= 0.0)) throw DomainError("sigma0 must be non-negative");
    if (theta * T > 4.0 / 3.0) {
        std::ostringstream os;
        os << "norm equivalence needs theta*T <= 4/3 (got " << theta * T << ")";
        throw PreconditionError(os.str());
    }
    NormEquivalence out;
    out.C = std::sqrt(2.0 * theta * theta * T * sigma0 * sigma0 + 4.0 * sigma * sigma);
    out.K = theta * theta / (sigma * sigma) * std::sqrt(ou_sq_covariance_integral(theta, sigma, T));
    out.c = (1.0 - std::sqrt(out.K)) * sigma;
    return out;
}

} // namespace pfq
