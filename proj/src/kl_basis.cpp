#include "pfq/kl_basis.hpp"

#include "pfq/errors.hpp"
#include "pfq/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>
#include <sstream>

namespace pfq {

IndexSet::IndexSet(std::initializer_list<std::size_t> indices)
    : IndexSet(std::vector<std::size_t>(indices))
{
}

IndexSet::IndexSet(std::vector<std::size_t> indices) : idx_(std::move(indices))
{
    std::sort(idx_.begin(), idx_.end());
    idx_.erase(std::unique(idx_.begin(), idx_.end()), idx_.end());
    if (idx_.empty()) throw PreconditionError("index set must be non-empty");
    if (idx_.front() == 0) throw PreconditionError("K-L indices are 1-based");
}

IndexSet IndexSet::first(std::size_t k)
{
    std::vector<std::size_t> v(k);
    for (std::size_t i = 0; i < k; ++i) v[i] = i + 1;
    return IndexSet(std::move(v));
}

bool IndexSet::contains(std::size_t i) const
{
    return std::binary_search(idx_.begin(), idx_.end(), i);
}

void IndexSet::check_within(std::size_t m) const
{
    if (idx_.empty()) throw PreconditionError("index set must be non-empty");
    if (idx_.back() > m) {
        std::ostringstream os;
        os << "index " << idx_.back() << " exceeds the " << m << " retained eigenpairs";
        throw PreconditionError(os.str());
    }
}

// Closed forms: lambda_n = 1/omega_n^2 and e_n = sqrt(2/T) sin(omega_n t) with
// omega_n = pi (n - 1/2) / T for BM and pi n / T for BB.
double KLBasis::frequency(std::size_t i) const
{
    const double n = static_cast<double>(i);
    if (spec_.family == Family::BrownianMotion) return std::numbers::pi * (n - 0.5) / spec_.T;
    return std::numbers::pi * n / spec_.T;
}

KLBasis KLBasis::closed_form(const ProcessSpec& spec, std::size_t m)
{
    spec.validate();
    if (spec.family != Family::BrownianMotion && spec.family != Family::BrownianBridge)
        throw UnsupportedFamilyError("no closed-form K-L expansion for " + family_name(spec.family) +
                                     "; use kl_nystrom");
    if (m == 0) throw DomainError("need at least one eigenpair");
    KLBasis b;
    b.spec_ = spec;
    b.repr_ = Representation::ClosedForm;
    b.eigenvalues_.resize(m);
    for (std::size_t i = 1; i <= m; ++i) {
        const double w = b.frequency(i);
        b.eigenvalues_[i - 1] = 1.0 / (w * w);
    }
    return b;
}

KLBasis KLBasis::from_nystrom(const ProcessSpec& spec, std::vector<double> eigenvalues,
                              std::vector<double> nodes, std::vector<double> weights,
                              Eigen::MatrixXd node_values)
{
    spec.validate();
    const auto m = eigenvalues.size();
    if (m == 0) throw DomainError("need at least one eigenpair");
    if (nodes.size() != weights.size() || node_values.rows() != static_cast<Eigen::Index>(m) ||
        node_values.cols() != static_cast<Eigen::Index>(nodes.size()))
        throw DomainError("inconsistent Nyström basis data");
    KLBasis b;
    b.spec_ = spec;
    b.repr_ = Representation::Nystrom;
    b.eigenvalues_ = std::move(eigenvalues);
    b.nodes_ = std::move(nodes);
    b.weights_ = std::move(weights);
    b.node_values_ = std::move(node_values);
    b.weighted_values_ = b.node_values_;
    for (Eigen::Index k = 0; k < b.weighted_values_.cols(); ++k)
        b.weighted_values_.col(k) *= b.weights_[static_cast<std::size_t>(k)];
    b.build_antiderivative_table();
    return b;
}

// The Nyström interpolant is smooth between nodes (the kernel cusps cancel
// against the subtracted term), so f_i is tabulated once by Gauss-Legendre on
// the node-aligned segments, graded on the two outer ones.
void KLBasis::build_antiderivative_table()
{
    breaks_.clear();
    breaks_.push_back(0.0);
    for (double x : nodes_) breaks_.push_back(x);
    breaks_.push_back(spec_.T);
    const std::size_t segs = breaks_.size() - 1;
    tail_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m()), static_cast<Eigen::Index>(segs + 1));
    for (std::size_t s = segs; s-- > 0;)
        tail_.col(static_cast<Eigen::Index>(s)) =
            tail_.col(static_cast<Eigen::Index>(s + 1)) + segment_integral(breaks_[s], breaks_[s + 1], s == 0 || s + 1 == segs);
}

Eigen::VectorXd KLBasis::segment_integral(double a, double b, bool graded) const
{
    static const QuadratureRule base = gauss_legendre(10, 0.0, 1.0);
    std::vector<double> x, w;
    auto panel = [&](double lo, double hi) {
        for (std::size_t j = 0; j < base.size(); ++j) {
            x.push_back(lo + (hi - lo) * base.nodes[j]);
            w.push_back((hi - lo) * base.weights[j]);
        }
    };
    if (graded) {
        const double mid = 0.5 * (a + b);
        double h = mid - a;
        for (int k = 0; k < 24; ++k) {
            panel(a + 0.5 * h, a + h);
            panel(b - h, b - 0.5 * h);
            h *= 0.5;
        }
    } else {
        panel(a, b);
    }
    Eigen::MatrixXd num;
    Eigen::VectorXd d;
    numerators(x, num, d);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(num.rows());
    for (Eigen::Index i = 0; i < num.rows(); ++i) {
        const double lam = eigenvalues_[static_cast<std::size_t>(i)];
        for (Eigen::Index k = 0; k < num.cols(); ++k) out(i) += w[static_cast<std::size_t>(k)] * num(i, k) / (lam - d(k));
    }
    return out;
}

void KLBasis::numerators(std::span<const double> times, Eigen::MatrixXd& num, Eigen::VectorXd& d) const
{
    const Eigen::MatrixXd G = kernel_columns(times);
    const Eigen::Map<const Eigen::VectorXd> w(weights_.data(), static_cast<Eigen::Index>(weights_.size()));
    d = -(G.transpose() * w);
    for (std::size_t b = 0; b < times.size(); ++b)
        d(static_cast<Eigen::Index>(b)) += covariance_primitive(spec_, 0.0, times[b]);
    num = weighted_values_ * G;
}

Eigen::MatrixXd KLBasis::kernel_columns(std::span<const double> times) const
{
    const auto n = static_cast<Eigen::Index>(nodes_.size());
    Eigen::MatrixXd G(n, static_cast<Eigen::Index>(times.size()));
    for (Eigen::Index b = 0; b < G.cols(); ++b)
        for (Eigen::Index k = 0; k < n; ++k) G(k, b) = covariance(spec_, times[b], nodes_[k]);
    return G;
}

void KLBasis::check_index(std::size_t i) const
{
    if (i == 0 || i > m()) {
        std::ostringstream os;
        os << "eigen index " << i << " outside 1.." << m();
        throw DomainError(os.str());
    }
}

double KLBasis::eigenvalue(std::size_t i) const
{
    check_index(i);
    return eigenvalues_[i - 1];
}

double KLBasis::eigenfunction(std::size_t i, double t) const
{
    check_index(i);
    if (repr_ == Representation::ClosedForm)
        return std::sqrt(2.0 / spec_.T) * std::sin(frequency(i) * t);
    const std::size_t idx[1] = {i};
    const double ts[1] = {t};
    return evaluate(idx, ts)(0, 0);
}

double KLBasis::antiderivative(std::size_t i, double t) const
{
    check_index(i);
    if (repr_ == Representation::ClosedForm) {
        const double w = frequency(i);
        return std::sqrt(2.0 / spec_.T) * (std::cos(w * t) - std::cos(w * spec_.T)) / w;
    }
    const std::size_t idx[1] = {i};
    const double ts[1] = {t};
    return evaluate_antiderivative(idx, ts)(0, 0);
}

// Nyström extension with singularity subtraction:
//   lambda e(t) = sum_k w_k G(t,x_k) (e(x_k) - e(t)) + e(t) R(t),  R(t) = int G(t,s) ds,
// so e(t) = N(t) / (lambda - d(t)) with N(t) = sum_k w_k G(t,x_k) e(x_k) and
// d(t) = R(t) - sum_k w_k G(t,x_k).
Eigen::MatrixXd KLBasis::evaluate(std::span<const std::size_t> indices, std::span<const double> times) const
{
    for (auto i : indices) check_index(i);
    const auto r = static_cast<Eigen::Index>(indices.size());
    const auto c = static_cast<Eigen::Index>(times.size());
    Eigen::MatrixXd out(r, c);
    if (repr_ == Representation::ClosedForm) {
        const double scale = std::sqrt(2.0 / spec_.T);
        for (Eigen::Index a = 0; a < r; ++a) {
            const double w = frequency(indices[a]);
            for (Eigen::Index b = 0; b < c; ++b) out(a, b) = scale * std::sin(w * times[b]);
        }
        return out;
    }
    Eigen::MatrixXd num;
    Eigen::VectorXd d;
    numerators(times, num, d);
    for (Eigen::Index a = 0; a < r; ++a) {
        const auto row = static_cast<Eigen::Index>(indices[a] - 1);
        const double lam = eigenvalues_[static_cast<std::size_t>(row)];
        for (Eigen::Index b = 0; b < c; ++b) out(a, b) = num(row, b) / (lam - d(b));
    }
    return out;
}

Eigen::MatrixXd KLBasis::evaluate_antiderivative(std::span<const std::size_t> indices,
                                                 std::span<const double> times) const
{
    for (auto i : indices) check_index(i);
    const auto r = static_cast<Eigen::Index>(indices.size());
    const auto c = static_cast<Eigen::Index>(times.size());
    Eigen::MatrixXd out(r, c);
    if (repr_ == Representation::ClosedForm) {
        for (Eigen::Index a = 0; a < r; ++a)
            for (Eigen::Index b = 0; b < c; ++b) out(a, b) = antiderivative(indices[a], times[b]);
        return out;
    }
    const std::size_t segs = breaks_.size() - 1;
    for (Eigen::Index b = 0; b < c; ++b) {
        const double t = std::clamp(times[b], 0.0, spec_.T);
        const auto it = std::upper_bound(breaks_.begin(), breaks_.end(), t);
        std::size_t s = static_cast<std::size_t>(it - breaks_.begin());
        s = std::min(s == 0 ? 0 : s - 1, segs - 1);
        const Eigen::VectorXd part = t < breaks_[s + 1]
                                         ? segment_integral(t, breaks_[s + 1], s == 0 || s + 1 == segs)
                                         : Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m()));
        for (Eigen::Index a = 0; a < r; ++a) {
            const auto row = static_cast<Eigen::Index>(indices[a] - 1);
            out(a, b) = part(row) + tail_(row, static_cast<Eigen::Index>(s + 1));
        }
    }
    return out;
}

double KLBasis::tail_sum(std::size_t k) const
{
    if (repr_ == Representation::Nystrom) {
        if (k > m()) throw DomainError("tail beyond the retained spectrum of a Nyström basis");
        double partial = 0.0;
        for (std::size_t j = 0; j < k; ++j) partial += eigenvalues_[j];
        return std::max(0.0, covariance_trace(spec_) - partial);
    }
    // lambda_j = c / (j - a)^2; exact terms up to J, then the integral from J + 1/2.
    constexpr std::size_t J = 1000000;
    const double a = spec_.family == Family::BrownianMotion ? 0.5 : 0.0;
    const double c = spec_.T * spec_.T / (std::numbers::pi * std::numbers::pi);
    double sum = c / (static_cast<double>(J) + 0.5 - a);
    for (std::size_t j = J; j > k; --j) {
        const double d = static_cast<double>(j) - a;
        sum += c / (d * d);
    }
    return sum;
}

double KLBasis::period(std::size_t i) const
{
    check_index(i);
    if (repr_ == Representation::ClosedForm) return 2.0 * std::numbers::pi / frequency(i);
    return 2.0 * spec_.T / static_cast<double>(i);
}

KLBasis kl_closed_form(const ProcessSpec& spec, std::size_t m)
{
    return KLBasis::closed_form(spec, m);
}

KLBasis kl_nystrom(const ProcessSpec& spec, std::size_t m, std::size_t quad_nodes)
{
    spec.validate();
    if (m == 0) throw DomainError("need at least one eigenpair");
    if (quad_nodes < 4 * m) {
        std::ostringstream os;
        os << "Nyström needs at least 4m = " << 4 * m << " nodes (got " << quad_nodes << ")";
        throw PreconditionError(os.str());
    }
    const QuadratureRule rule = gauss_legendre(quad_nodes, 0.0, spec.T);
    const auto n = static_cast<Eigen::Index>(quad_nodes);
    Eigen::VectorXd sw(n);
    for (Eigen::Index k = 0; k < n; ++k) sw(k) = std::sqrt(rule.weights[k]);

    // Symmetrized singularity-subtracted operator W^{1/2} G W^{1/2} + diag(R - G w).
    Eigen::MatrixXd A(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j <= i; ++j)
            A(i, j) = A(j, i) = covariance(spec, rule.nodes[i], rule.nodes[j]);
    const Eigen::Map<const Eigen::VectorXd> w(rule.weights.data(), n);
    const Eigen::VectorXd rowsum = A * w;
    A = sw.asDiagonal() * A * sw.asDiagonal();
    for (Eigen::Index i = 0; i < n; ++i) A(i, i) += covariance_primitive(spec, 0.0, rule.nodes[i]) - rowsum(i);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A);
    if (eig.info() != Eigen::Success) throw NumericalError("Nyström eigensolver failed");

    std::vector<double> lambdas(m);
    Eigen::MatrixXd values(static_cast<Eigen::Index>(m), n);
    const double top = eig.eigenvalues()(n - 1);
    for (std::size_t i = 0; i < m; ++i) {
        const Eigen::Index col = n - 1 - static_cast<Eigen::Index>(i);
        const double lam = eig.eigenvalues()(col);
        if (!(lam > 1e-12 * top)) {
            std::ostringstream os;
            os << "eigenvalue " << i + 1 << " (" << lam << ") below the resolvable spectrum; reduce m";
            throw ResolutionError(os.str());
        }
        lambdas[i] = lam;
        Eigen::VectorXd v = eig.eigenvectors().col(col).cwiseQuotient(sw);
        for (Eigen::Index k = 0; k < n; ++k) {
            if (std::abs(v(k)) > 1e-3) {
                if (v(k) < 0.0) v = -v;
                break;
            }
        }
        values.row(static_cast<Eigen::Index>(i)) = v.transpose();
    }
    return KLBasis::from_nystrom(spec, std::move(lambdas), rule.nodes, rule.weights, std::move(values));
}

KLBasis kl_basis(const ProcessSpec& spec, std::size_t m, std::size_t quad_nodes)
{
    if (spec.family == Family::BrownianMotion || spec.family == Family::BrownianBridge)
        return kl_closed_form(spec, m);
    return kl_nystrom(spec, m, quad_nodes);
}

std::function<double(double)> antiderivative_f(const KLBasis& basis, std::size_t i)
{
    if (i == 0 || i > basis.m()) throw DomainError("antiderivative index out of range");
    return [basis, i](double t) { return basis.antiderivative(i, t); };
}

void check_grid_resolution(const KLBasis& basis, const IndexSet& I, const TimeGrid& grid, bool strict)
{
    I.check_within(basis.m());
    const double T = basis.spec().T;
    if (std::abs(grid.back() - T) > 1e-12 * T)
        throw DomainError("K-L coordinates need a path grid covering [0, T]");
    double h = 0.0;
    for (std::size_t k = 1; k < grid.size(); ++k) h = std::max(h, grid[k] - grid[k - 1]);
    const double per_period = basis.period(I.max()) / h;
    if (per_period < 64.0) {
        std::ostringstream os;
        os << "grid resolves e_" << I.max() << " with only " << per_period << " points per period (need 64)";
        if (strict) throw ResolutionError(os.str());
        std::clog << "warning: " << os.str() << '\n';
    }
}

CoordinateProjector::CoordinateProjector(const KLBasis& basis, const IndexSet& I, const TimeGrid& grid,
                                         bool strict)
    : I_(I), grid_(grid)
{
    check_grid_resolution(basis, I, grid, strict);
    values_ = basis.evaluate(I.indices(), grid.points());
    const auto w = grid.trapezoid_weights();
    weighted_ = values_;
    for (Eigen::Index k = 0; k < weighted_.cols(); ++k) weighted_.col(k) *= w[static_cast<std::size_t>(k)];
}

void CoordinateProjector::project_into(std::span<const double> values, std::span<double> out) const
{
    if (values.size() != grid_.size()) throw DomainError("path does not match the projector grid");
    if (out.size() != I_.size()) throw DomainError("coordinate buffer has the wrong size");
    const Eigen::Map<const Eigen::VectorXd> x(values.data(), static_cast<Eigen::Index>(values.size()));
    Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size())) = weighted_ * x;
}

std::vector<double> CoordinateProjector::project(std::span<const double> values) const
{
    std::vector<double> out(I_.size());
    project_into(values, out);
    return out;
}

void CoordinateProjector::add_combination(std::span<const double> coeffs, std::span<double> values) const
{
    if (coeffs.size() != I_.size() || values.size() != grid_.size())
        throw DomainError("combination dimensions do not match the projector");
    const Eigen::Map<const Eigen::VectorXd> c(coeffs.data(), static_cast<Eigen::Index>(coeffs.size()));
    Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size())) +=
        values_.transpose() * c;
}

std::vector<double> kl_coordinates(const Path& path, const KLBasis& basis, const IndexSet& I, bool strict)
{
    if (path.values.size() != path.grid.size()) throw DomainError("path values do not match its grid");
    return CoordinateProjector(basis, I, path.grid, strict).project(path.values);
}

} // namespace pfq
