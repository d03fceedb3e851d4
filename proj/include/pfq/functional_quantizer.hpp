#pragma once

#include "pfq/kl_basis.hpp"
#include "pfq/quantizer.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pfq {

struct SelectionRow {
    std::size_t m = 0;
    double tail = 0.0;
    // Block distortion as certified by the codebook itself.
    double block = 0.0;
    double total = 0.0;
    // Total re-estimated on the shared evaluation cloud, and the standard
    // error of its paired difference with the selected rank.
    double shared_total = 0.0;
    double paired_se = 0.0;
};

struct FunctionalQuantizer {
    KLBasis basis;
    std::size_t dim = 0;
    Codebook codebook;
    double tail = 0.0;
    double total_distortion = 0.0;
    std::vector<SelectionRow> selection;
    // Ranks other than dim that fell inside the tie band.
    std::vector<std::size_t> ties;

    std::size_t size() const noexcept { return codebook.size(); }
    // x_k(t_j) = sum_{i <= dim} gamma_{k,i} e_i(t_j); N rows.
    Eigen::MatrixXd paths(std::span<const double> times) const;
};

struct FqOptions {
    // Training cloud per multi-dimensional block; 0 picks max(2e4 N, 2e5).
    std::size_t samples = 0;
    // Shared evaluation cloud for the rank comparison.
    std::size_t eval_samples = 200000;
    // Ranks whose total lies within 3 paired SE plus tie_rel * min total of
    // the minimum are treated as equal; the smallest such rank is selected.
    double tie_rel = 1e-3;
    std::size_t workers = 1;
};

// Builds a quantizer for every rank m <= m_max and keeps the smallest rank
// on the minimal-distortion plateau.
FunctionalQuantizer build_fq(const KLBasis& basis, std::size_t N, std::size_t m_max, Rng& rng,
                             const FqOptions& opts = {});

// Assembles a quantizer from an existing codebook of dimension d <= basis.m().
FunctionalQuantizer make_fq(const KLBasis& basis, Codebook codebook);

std::size_t quantize_path(const FunctionalQuantizer& fq, const Path& path);

struct McEstimate {
    double mean = 0.0;
    double se = 0.0;
};

// E min_k ||X - x_k||^2 in L^2[0,T], computed on simulated grid paths with
// trapezoid norms.
McEstimate mc_total_distortion(const FunctionalQuantizer& fq, std::size_t paths, Rng& rng,
                               std::size_t grid_points = 512, std::size_t workers = 1);

// Path functional F: L^2[0,T] -> R with the constants its error bounds need.
struct Functional {
    std::string id;
    // values on a grid, trapezoid weights of that grid
    double (*eval)(std::span<const double> values, std::span<const double> weights) = nullptr;
    // Applied to the value of eval (identity when null).
    double (*outer)(double) = nullptr;
    // [F]_Lip as a function of T, null when F is not globally Lipschitz.
    double (*lipschitz)(double T) = nullptr;
    // [DF]_alpha and alpha, when DF is globally alpha-Hoelder.
    double (*holder_constant)(double T) = nullptr;
    double holder_alpha = 0.0;
    bool convex = false;

    double operator()(std::span<const double> values, std::span<const double> weights) const;
};

// integral, l2norm, sq_integral, exp_integral.
const std::vector<Functional>& functional_registry();
// Registry lookup; "<id>^2" squares a registered functional. Unknown ids throw DomainError.
Functional find_functional(const std::string& id);

inline constexpr std::size_t kCubatureGrid = 512;

// sum_k p_k F(x_k), quantizer paths on a uniform grid of kCubatureGrid points.
double cubature(const FunctionalQuantizer& fq, const Functional& F);

struct CubatureReport {
    double cubature = 0.0;
    double mc_estimate = 0.0;
    double mc_se = 0.0;
    std::optional<double> lip_bound;
    std::optional<double> holder_bound;
    bool lip_ok = true;
    bool holder_ok = true;
    // Convex F: cubature <= mc_estimate + 3 mc_se.
    bool convex_ok = true;
};

CubatureReport cubature_error_report(const FunctionalQuantizer& fq, const Functional& F, std::size_t mc_samples,
                                     Rng& rng, std::size_t workers = 1);

} // namespace pfq
