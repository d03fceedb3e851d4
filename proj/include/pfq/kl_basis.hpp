#pragma once

#include "pfq/process.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

namespace pfq {

enum class Representation { ClosedForm, Nystrom };

// Finite set of 1-based K-L indices, kept sorted and unique.
class IndexSet {
public:
    IndexSet() = default;
    IndexSet(std::initializer_list<std::size_t> indices);
    explicit IndexSet(std::vector<std::size_t> indices);

    // {1, ..., k}
    static IndexSet first(std::size_t k);

    std::size_t size() const noexcept { return idx_.size(); }
    std::size_t operator[](std::size_t k) const { return idx_[k]; }
    std::size_t max() const { return idx_.back(); }
    bool contains(std::size_t i) const;
    const std::vector<std::size_t>& indices() const noexcept { return idx_; }
    auto begin() const { return idx_.begin(); }
    auto end() const { return idx_.end(); }

    void check_within(std::size_t m) const;

private:
    std::vector<std::size_t> idx_;
};

class KLBasis {
public:
    KLBasis() = default;

    static KLBasis closed_form(const ProcessSpec& spec, std::size_t m);
    // Rebuilds a Nyström basis from stored nodes, weights, eigenvalues and
    // node values (m rows, one column per node).
    static KLBasis from_nystrom(const ProcessSpec& spec, std::vector<double> eigenvalues,
                                std::vector<double> nodes, std::vector<double> weights,
                                Eigen::MatrixXd node_values);

    const ProcessSpec& spec() const noexcept { return spec_; }
    std::size_t m() const noexcept { return eigenvalues_.size(); }
    Representation representation() const noexcept { return repr_; }
    const std::vector<double>& eigenvalues() const noexcept { return eigenvalues_; }
    double eigenvalue(std::size_t i) const;
    std::size_t quad_nodes() const noexcept { return nodes_.size(); }
    const std::vector<double>& nodes() const noexcept { return nodes_; }
    const std::vector<double>& weights() const noexcept { return weights_; }
    const Eigen::MatrixXd& node_values() const noexcept { return node_values_; }

    double eigenfunction(std::size_t i, double t) const;
    // f_i(t) = integral of e_i over [t, T].
    double antiderivative(std::size_t i, double t) const;

    // Rows follow `indices`, columns follow `times`.
    Eigen::MatrixXd evaluate(std::span<const std::size_t> indices, std::span<const double> times) const;
    Eigen::MatrixXd evaluate_antiderivative(std::span<const std::size_t> indices,
                                            std::span<const double> times) const;

    // Sum of eigenvalues beyond index k (k <= m for Nyström bases).
    double tail_sum(std::size_t k) const;

    // Approximate period of e_i, used for grid adequacy checks.
    double period(std::size_t i) const;

private:
    friend KLBasis kl_nystrom(const ProcessSpec&, std::size_t, std::size_t);

    void check_index(std::size_t i) const;
    double frequency(std::size_t i) const;
    Eigen::MatrixXd kernel_columns(std::span<const double> times) const;
    // Extension numerators N_i(t) (all m rows) and quadrature defects d(t).
    void numerators(std::span<const double> times, Eigen::MatrixXd& num, Eigen::VectorXd& d) const;
    void build_antiderivative_table();
    // Integral of every e_i over [a, b].
    Eigen::VectorXd segment_integral(double a, double b, bool graded) const;

    ProcessSpec spec_;
    Representation repr_ = Representation::ClosedForm;
    std::vector<double> eigenvalues_;
    std::vector<double> nodes_;
    std::vector<double> weights_;
    Eigen::MatrixXd node_values_;
    // w_k e_i(x_k)
    Eigen::MatrixXd weighted_values_;
    std::vector<double> breaks_;
    // Column s: f_i(breaks_[s]).
    Eigen::MatrixXd tail_;
};

KLBasis kl_closed_form(const ProcessSpec& spec, std::size_t m);
KLBasis kl_nystrom(const ProcessSpec& spec, std::size_t m, std::size_t quad_nodes);
// Closed form where one exists, Nyström otherwise.
KLBasis kl_basis(const ProcessSpec& spec, std::size_t m, std::size_t quad_nodes = 400);

std::function<double(double)> antiderivative_f(const KLBasis& basis, std::size_t i);

// Precomputed trapezoid projection onto e_i, i in I, for a fixed grid.
class CoordinateProjector {
public:
    CoordinateProjector(const KLBasis& basis, const IndexSet& I, const TimeGrid& grid, bool strict = false);

    std::vector<double> project(std::span<const double> values) const;
    void project_into(std::span<const double> values, std::span<double> out) const;

    // Adds sum_j coeffs[j] e_{I[j]} to values in place.
    void add_combination(std::span<const double> coeffs, std::span<double> values) const;

    const IndexSet& indices() const noexcept { return I_; }
    const TimeGrid& grid() const noexcept { return grid_; }
    // e_{I[j]}(t_k), |I| rows.
    const Eigen::MatrixXd& basis_values() const noexcept { return values_; }

private:
    IndexSet I_;
    TimeGrid grid_;
    Eigen::MatrixXd values_;
    Eigen::MatrixXd weighted_;
};

// Checks that the grid resolves e_i for every i in I (at least 64 points
// per period) and covers [0, T]. Strict mode throws; otherwise a warning is
// written to std::clog.
void check_grid_resolution(const KLBasis& basis, const IndexSet& I, const TimeGrid& grid, bool strict);

std::vector<double> kl_coordinates(const Path& path, const KLBasis& basis, const IndexSet& I,
                                   bool strict = false);

} // namespace pfq
