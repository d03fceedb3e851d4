#include "pfq/bridges.hpp"

#include "pfq/errors.hpp"
#include "pfq/numerics.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pfq {

namespace {

void check_window(const BridgeSpec& bridge, double s)
{
    if (!(s >= 0.0) || !(s < bridge.spec.T)) throw DomainError("Gram matrix needs 0 <= s < T");
    if (bridge.functions.empty()) throw DomainError("bridge needs at least one function");
}

void check_semimartingale(const ProcessSpec& spec)
{
    if (!spec.is_semimartingale())
        throw UnsupportedFamilyError("generalized bridges need a semimartingale family");
}

Eigen::VectorXd f_at(const BridgeSpec& bridge, double t)
{
    Eigen::VectorXd v(static_cast<Eigen::Index>(bridge.size()));
    for (std::size_t i = 0; i < bridge.size(); ++i) v(static_cast<Eigen::Index>(i)) = bridge.functions[i](t);
    return v;
}

// Eigenvalues of a symmetric matrix, ascending.
Eigen::VectorXd spectrum(const Eigen::MatrixXd& q)
{
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(q, Eigen::EigenvaluesOnly).eigenvalues();
}

Eigen::MatrixXd invert_checked(const Eigen::MatrixXd& q, double s)
{
    const auto ev = spectrum(q);
    const double top = ev.cwiseAbs().maxCoeff();
    if (!(top > 0.0) || std::abs(ev(0)) <= 1e-10 * top) {
        std::ostringstream os;
        os << "Q(s,T) is singular at s = " << s << ": hypothesis (H) fails";
        throw LinearAlgebraError(os.str());
    }
    return q.ldlt().solve(Eigen::MatrixXd::Identity(q.rows(), q.cols()));
}

} // namespace

void BridgeSpec::validate() const
{
    spec.validate();
    check_semimartingale(spec);
    if (functions.empty()) throw DomainError("bridge needs at least one function");
    if (endpoint.size() != functions.size()) throw DomainError("endpoint length must match the function count");
    const auto q = gram_Q(*this, 0.0).entries;
    const auto ev = spectrum(q);
    if (!(ev(0) > 0.0) || ev(ev.size() - 1) / ev(0) >= 1e12)
        throw DomainError("bridge functions are not linearly independent on [0, T]");
}

BridgeSpec kl_bridge_spec(const KLBasis& basis, const IndexSet& I, std::vector<double> endpoint)
{
    if (I.size() == 0) throw PreconditionError("index set must be non-empty");
    I.check_within(basis.m());
    BridgeSpec b{basis.spec(), {}, std::move(endpoint)};
    for (std::size_t i : I) b.functions.push_back(antiderivative_f(basis, i));
    return b;
}

GramMatrix gram_Q_increments(const BridgeSpec& bridge, double s, std::size_t resolution)
{
    check_window(bridge, s);
    check_semimartingale(bridge.spec);
    if (resolution < 2) throw DomainError("resolution must be at least 2");
    const double T = bridge.spec.T;
    const std::size_t n = resolution;
    std::vector<double> t(n + 1);
    for (std::size_t a = 0; a <= n; ++a) t[a] = s + (T - s) * static_cast<double>(a) / static_cast<double>(n);
    t[n] = T;

    // cov(G_u, G_v) = Gamma(u,v) - Gamma(u,s) Gamma(s,v) / Gamma(s,s) for the
    // Gaussian Markov families.
    const double gss = covariance(bridge.spec, s, s);
    Eigen::VectorXd gs(static_cast<Eigen::Index>(n + 1));
    for (std::size_t a = 0; a <= n; ++a) gs(static_cast<Eigen::Index>(a)) = covariance(bridge.spec, t[a], s);
    Eigen::MatrixXd K(n + 1, n + 1);
    for (std::size_t a = 0; a <= n; ++a)
        for (std::size_t b = a; b <= n; ++b) {
            double v = covariance(bridge.spec, t[a], t[b]);
            if (gss > 0.0) v -= gs(static_cast<Eigen::Index>(a)) * gs(static_cast<Eigen::Index>(b)) / gss;
            K(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = v;
            K(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = v;
        }

    // F D with D the increment operator: column a holds f(mid_a), applied to G_{a+1} - G_a.
    const auto m = static_cast<Eigen::Index>(bridge.size());
    Eigen::MatrixXd FD = Eigen::MatrixXd::Zero(m, static_cast<Eigen::Index>(n + 1));
    for (std::size_t a = 0; a < n; ++a) {
        const Eigen::VectorXd f = f_at(bridge, 0.5 * (t[a] + t[a + 1]));
        FD.col(static_cast<Eigen::Index>(a + 1)) += f;
        FD.col(static_cast<Eigen::Index>(a)) -= f;
    }
    GramMatrix g{s, T, FD * K * FD.transpose()};
    g.entries = 0.5 * (g.entries + g.entries.transpose()).eval();
    return g;
}

GramMatrix gram_Q(const BridgeSpec& bridge, double s, std::size_t resolution)
{
    check_window(bridge, s);
    check_semimartingale(bridge.spec);
    if (bridge.spec.family != Family::BrownianMotion) return gram_Q_increments(bridge, s, resolution);
    const double T = bridge.spec.T;
    // Composite 8-point rule, resolution / 8 panels.
    const std::size_t panels = std::max<std::size_t>(1, resolution / 8);
    const auto m = static_cast<Eigen::Index>(bridge.size());
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(m, m);
    const double h = (T - s) / static_cast<double>(panels);
    for (std::size_t p = 0; p < panels; ++p) {
        const auto rule = gauss_legendre(8, s + h * static_cast<double>(p), s + h * static_cast<double>(p + 1));
        for (std::size_t k = 0; k < rule.size(); ++k) {
            const Eigen::VectorXd f = f_at(bridge, rule.nodes[k]);
            q.noalias() += rule.weights[k] * f * f.transpose();
        }
    }
    return {s, T, q};
}

std::vector<HCheck> check_H(const BridgeSpec& bridge, std::span<const double> s_grid, std::size_t resolution)
{
    std::vector<HCheck> out;
    out.reserve(s_grid.size());
    for (double s : s_grid) {
        const auto q = gram_Q(bridge, s, resolution).entries;
        const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(q).singularValues();
        HCheck h;
        h.s = s;
        h.min_singular_value = sv(sv.size() - 1);
        h.condition_number = h.min_singular_value > 0.0 ? sv(0) / h.min_singular_value
                                                        : std::numeric_limits<double>::infinity();
        h.pass = sv(0) > 0.0 && h.min_singular_value > 1e-10 * sv(0);
        out.push_back(h);
    }
    return out;
}

double conditional_covariance(const KLBasis& basis, const IndexSet& I, double s, double t)
{
    if (I.size() == 0) throw PreconditionError("index set must be non-empty");
    I.check_within(basis.m());
    double v = covariance(basis.spec(), s, t);
    for (std::size_t i : I) v -= basis.eigenvalue(i) * basis.eigenfunction(i, s) * basis.eigenfunction(i, t);
    return v;
}

KLBridgeSampler::KLBridgeSampler(const KLBasis& basis, const IndexSet& I, const TimeGrid& grid)
    : sampler_(basis.spec(), grid), proj_(basis, I, grid)
{
    if (I.size() == 0) throw PreconditionError("index set must be non-empty");
}

void KLBridgeSampler::sample_into(std::span<const double> ybar, std::span<double> out, Rng& rng) const
{
    const std::size_t k = proj_.indices().size();
    if (ybar.size() != k) throw DomainError("conditioning vector length must equal |I|");
    sampler_.sample_into(out, rng);
    std::vector<double> y(k);
    proj_.project_into(out, y);
    for (std::size_t j = 0; j < k; ++j) y[j] = ybar[j] - y[j];
    proj_.add_combination(y, out);
}

Path KLBridgeSampler::sample(std::span<const double> ybar, Rng& rng) const
{
    Path p{proj_.grid(), std::vector<double>(proj_.grid().size())};
    sample_into(ybar, p.values, rng);
    return p;
}

Path kl_bridge_sample(const KLBasis& basis, const IndexSet& I, std::span<const double> ybar, const TimeGrid& grid,
                      Rng& rng)
{
    return KLBridgeSampler(basis, I, grid).sample(ybar, rng);
}

double canonical_drift(const BridgeSpec& bridge, const Path& history, std::size_t resolution)
{
    if (bridge.spec.family != Family::BrownianMotion)
        throw UnsupportedFamilyError("canonical drift is implemented for Brownian motion only");
    if (bridge.endpoint.size() != bridge.size()) throw DomainError("endpoint length must match the function count");
    if (history.values.size() != history.grid.size() || history.grid.size() == 0)
        throw DomainError("history values do not match its grid");
    const double s = history.grid.back();
    const auto q_inv = invert_checked(gram_Q(bridge, s, resolution).entries, s);
    Eigen::VectorXd resid = Eigen::Map<const Eigen::VectorXd>(bridge.endpoint.data(),
                                                              static_cast<Eigen::Index>(bridge.size()));
    for (std::size_t a = 0; a + 1 < history.grid.size(); ++a)
        resid -= f_at(bridge, history.grid[a]) * (history.values[a + 1] - history.values[a]);
    return f_at(bridge, s).dot(q_inv * resid);
}

BridgeSdeSampler::BridgeSdeSampler(BridgeSpec bridge, const TimeGrid& grid, std::size_t resolution)
    : bridge_(std::move(bridge)), grid_(grid)
{
    if (bridge_.spec.family != Family::BrownianMotion)
        throw UnsupportedFamilyError("bridge SDE sampling is implemented for Brownian motion only");
    bridge_.validate();
    if (grid_.size() < 2 || grid_[0] != 0.0) throw DomainError("bridge SDE grid must start at 0");
    if (!(grid_.back() < bridge_.spec.T)) throw DomainError("bridge SDE grid must stop before T (drift is singular there)");
    const auto m = static_cast<Eigen::Index>(bridge_.size());
    f_.resize(m, static_cast<Eigen::Index>(grid_.size()));
    q_inv_.reserve(grid_.size());
    for (std::size_t k = 0; k < grid_.size(); ++k) {
        f_.col(static_cast<Eigen::Index>(k)) = f_at(bridge_, grid_[k]);
        q_inv_.push_back(invert_checked(gram_Q(bridge_, grid_[k], resolution).entries, grid_[k]));
    }
}

void BridgeSdeSampler::sample_into(std::span<double> out, Rng& rng) const
{
    if (out.size() != grid_.size()) throw DomainError("output buffer does not match the grid");
    const Eigen::VectorXd z = Eigen::Map<const Eigen::VectorXd>(bridge_.endpoint.data(),
                                                                static_cast<Eigen::Index>(bridge_.size()));
    // E[Z_T | F_t], accumulated along the path.
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(z.size());
    out[0] = 0.0;
    for (std::size_t k = 0; k + 1 < grid_.size(); ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        const double dt = grid_[k + 1] - grid_[k];
        const double drift = f_.col(kk).dot(q_inv_[k] * (z - mean));
        const double dx = drift * dt + std::sqrt(dt) * rng.normal();
        out[k + 1] = out[k] + dx;
        mean += f_.col(kk) * dx;
    }
}

Path BridgeSdeSampler::sample(Rng& rng) const
{
    Path p{grid_, std::vector<double>(grid_.size())};
    sample_into(p.values, rng);
    return p;
}

Path bridge_sde_sample(const BridgeSpec& bridge, const TimeGrid& grid, Rng& rng)
{
    return BridgeSdeSampler(bridge, grid).sample(rng);
}

} // namespace pfq
