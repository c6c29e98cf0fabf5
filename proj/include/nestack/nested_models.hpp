#pragma once

// Nested least-squares projection families over an orthonormal basis.
//
// Every norm and inner product in this library is the *empirical* one,
//
//     ||v||^2 = (1/n) sum_i v_i^2,      <u, v> = (1/n) sum_i u_i v_i,
//
// so an orthonormal basis vector has entries of size ~1, not ~1/sqrt(n).
// Callers coming from libraries that use unnormalized sums must rescale.
//
// Model indices follow the usual convention of the theory: models are
// numbered 1..M and index 0 denotes the null model (d_0 = 0, R_0 = ||y||^2).
// Vectors indexed by model are stored 0-based, element k-1 <-> model k.

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace nestack {

/// Fixed design: n rows (design points) by p columns (features).
struct DesignMatrix {
    Eigen::MatrixXd values;

    std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
    std::size_t cols() const { return static_cast<std::size_t>(values.cols()); }
};

enum class BasisOrigin { given, gram_schmidt, sequence_model };

/// Orthonormal (under the empirical inner product) basis evaluated at the
/// n design points; column l holds psi_l(x_1..x_n).
struct OrthonormalBasis {
    Eigen::MatrixXd psi;
    BasisOrigin origin = BasisOrigin::given;
    /// Design columns dropped as linearly dependent (gram_schmidt only).
    std::vector<std::size_t> dropped;
    /// For gram_schmidt: design column that produced each basis vector.
    std::vector<std::size_t> source_column;

    std::size_t n() const { return static_cast<std::size_t>(psi.rows()); }
    std::size_t size() const { return static_cast<std::size_t>(psi.cols()); }
};

/// Strictly nested chain A_1 ⊂ A_2 ⊂ ... ⊂ A_M of basis indices (0-based).
struct NestedIndexSets {
    std::vector<std::vector<std::size_t>> sets;

    std::size_t size() const { return sets.size(); }
};

/// Coefficients <y, psi_l> for the basis indices added by one model,
/// l in A_k \ A_{k-1}.
struct CoefBlock {
    std::vector<std::size_t> index;
    std::vector<double> coef;
};

/// Sufficient statistics of a nested projection family.
struct NestedModelSequence {
    double sigma2 = 0.0;
    std::size_t n = 0;
    std::vector<long> d;  // d_1 < ... < d_M
    double r0 = 0.0;      // ||y||^2
    std::vector<double> r;  // R_1 > ... > R_M >= 0
    std::optional<std::vector<CoefBlock>> coef_blocks;

    std::size_t models() const { return d.size(); }
    double noise_scale() const { return sigma2 / static_cast<double>(n); }

    /// d_k with d_0 = 0, k in 0..M.
    double dim(std::size_t k) const { return k == 0 ? 0.0 : static_cast<double>(d[k - 1]); }
    /// R_k with R_0 = ||y||^2, k in 0..M.
    double risk(std::size_t k) const { return k == 0 ? r0 : r[k - 1]; }
    /// ΔR_k = R_{k-1} - R_k for k in 1..M.
    double risk_drop(std::size_t k) const { return risk(k - 1) - risk(k); }
    /// Δd_k = d_k - d_{k-1} for k in 1..M.
    double dim_step(std::size_t k) const { return dim(k) - dim(k - 1); }
};

/// Throws Error(validation) unless all sequence invariants hold; a
/// non-strict decrease of R is reported as Error(degeneracy).
void validate(const NestedModelSequence& seq);

/// Throws unless the columns of psi are orthonormal under the empirical
/// inner product to `tol` (relative).
void validate_orthonormal(const Eigen::MatrixXd& psi, double tol = 1e-10);

void validate(const NestedIndexSets& sets, std::size_t basis_size);

/// Modified Gram-Schmidt with one re-orthogonalization pass. Columns whose
/// residual norm falls below 1e-10 of their original norm are dropped and
/// listed in `dropped`.
OrthonormalBasis orthonormalize(const DesignMatrix& design);

/// Project y onto each A_k. R_k is computed as R_0 minus the sum of squared
/// coefficients so the nesting identity holds exactly in the coefficients.
NestedModelSequence fit_nested(const OrthonormalBasis& basis, std::span<const double> y,
                               const NestedIndexSets& sets, double sigma2);

/// Backward elimination on the design columns: start from all p columns and
/// repeatedly drop the one whose removal raises the empirical risk least.
/// Returns p nested sets of design-column indices, smallest model first.
NestedIndexSets stepwise_deletion_order(const DesignMatrix& design, std::span<const double> y);

/// Orthonormal basis whose prefixes span the models of `sets`, plus the
/// matching prefix index sets. Used to fit stepwise-deletion chains, whose
/// design columns are not orthogonal.
std::pair<OrthonormalBasis, NestedIndexSets> nested_basis(const DesignMatrix& design,
                                                          const NestedIndexSets& sets);

/// Prefix chain A_k = {0, ..., d_k - 1}.
NestedIndexSets prefix_sets(std::span<const long> dims);

/// Empirical risk ||y - sum_k alpha_k mu_k||^2 of a linear combination,
/// through the telescoping identity R_0 + sum_k ΔR_k (c_k^2 - 2 c_k),
/// c_k = sum_{i>=k} alpha_i.
double combination_risk(const NestedModelSequence& seq, std::span<const double> alpha);

/// Tail sums c_k = sum_{i>=k} alpha_i.
std::vector<double> telescoping_coefficients(std::span<const double> alpha);

/// Predictions sum_k (mu_k - mu_{k-1})(x) c_k at the points whose basis
/// evaluations are the rows of `basis_at_points` (one column per basis
/// function, same column order as the fitting basis).
std::vector<double> predict_combination(const Eigen::MatrixXd& basis_at_points,
                                        const NestedModelSequence& seq,
                                        std::span<const double> alpha);

/// Plug-in noise variance R_M * n / (n - d_M) from the largest model.
/// Outside the known-variance theory the weights rely on; use with care.
double estimate_sigma2(const NestedModelSequence& seq);

}  // namespace nestack
