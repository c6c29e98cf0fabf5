#include "nestack/nested_models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "nestack/error.hpp"

namespace nestack {

namespace {

constexpr double kDropTolerance = 1e-10;

double empirical_dot(const Eigen::Ref<const Eigen::VectorXd>& u,
                     const Eigen::Ref<const Eigen::VectorXd>& v) {
    return u.dot(v) / static_cast<double>(u.size());
}

double empirical_norm(const Eigen::Ref<const Eigen::VectorXd>& v) {
    return std::sqrt(v.squaredNorm() / static_cast<double>(v.size()));
}

// Gram-Schmidt over the columns of `x` in the given order.
OrthonormalBasis gram_schmidt(const Eigen::MatrixXd& x, std::span<const std::size_t> order) {
    const auto n = x.rows();
    OrthonormalBasis basis;
    basis.origin = BasisOrigin::gram_schmidt;
    basis.psi.resize(n, 0);
    std::vector<Eigen::VectorXd> kept;

    for (std::size_t col : order) {
        Eigen::VectorXd v = x.col(static_cast<Eigen::Index>(col));
        const double original = empirical_norm(v);
        if (original == 0.0) {
            basis.dropped.push_back(col);
            continue;
        }
        // Two sweeps: the second removes what cancellation left behind.
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& q : kept) v -= empirical_dot(v, q) * q;
        }
        const double residual = empirical_norm(v);
        if (residual < kDropTolerance * original) {
            basis.dropped.push_back(col);
            continue;
        }
        kept.push_back(v / residual);
        basis.source_column.push_back(col);
    }

    basis.psi.resize(n, static_cast<Eigen::Index>(kept.size()));
    for (std::size_t j = 0; j < kept.size(); ++j) basis.psi.col(static_cast<Eigen::Index>(j)) = kept[j];
    return basis;
}

void check_design(const DesignMatrix& design) {
    if (design.rows() < 1 || design.cols() < 1) fail_validation("design must have n >= 1 rows and p >= 1 columns");
    if (!design.values.allFinite()) fail_validation("design contains non-finite entries");
}

double residual_risk(const Eigen::MatrixXd& x, std::span<const std::size_t> columns,
                     const Eigen::VectorXd& y) {
    if (columns.empty()) return y.squaredNorm() / static_cast<double>(y.size());
    Eigen::MatrixXd sub(x.rows(), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t j = 0; j < columns.size(); ++j)
        sub.col(static_cast<Eigen::Index>(j)) = x.col(static_cast<Eigen::Index>(columns[j]));
    Eigen::VectorXd fitted = sub * sub.colPivHouseholderQr().solve(y);
    return (y - fitted).squaredNorm() / static_cast<double>(y.size());
}

}  // namespace

void validate_orthonormal(const Eigen::MatrixXd& psi, double tol) {
    if (psi.rows() < 1 || psi.cols() < 1) fail_validation("basis must be non-empty");
    if (!psi.allFinite()) fail_validation("basis contains non-finite entries");
    const Eigen::MatrixXd gram = psi.transpose() * psi / static_cast<double>(psi.rows());
    const double off = (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
    if (off > tol) {
        fail_validation("basis is not orthonormal under the empirical inner product (max Gram deviation " +
                        std::to_string(off) + ")");
    }
}

void validate(const NestedIndexSets& sets, std::size_t basis_size) {
    if (sets.sets.empty()) fail_validation("nested index sets must contain at least one model");
    std::set<std::size_t> previous;
    for (std::size_t k = 0; k < sets.sets.size(); ++k) {
        std::set<std::size_t> current;
        for (std::size_t idx : sets.sets[k]) {
            if (idx >= basis_size)
                fail_validation("index set " + std::to_string(k + 1) + " refers to basis index " +
                                std::to_string(idx) + " outside the basis");
            if (!current.insert(idx).second)
                fail_validation("index set " + std::to_string(k + 1) + " repeats an index");
        }
        if (current.size() <= previous.size() ||
            !std::includes(current.begin(), current.end(), previous.begin(), previous.end()))
            fail_validation("index sets must be strictly nested (set " + std::to_string(k + 1) + ")");
        previous = std::move(current);
    }
}

void validate(const NestedModelSequence& seq) {
    const std::size_t m = seq.d.size();
    if (!(seq.sigma2 > 0.0) || !std::isfinite(seq.sigma2))
        fail_validation("sigma2 must be a finite positive number (the noise level is assumed known)");
    if (seq.n < 1) fail_validation("n must be at least 1");
    if (m < 1) fail_validation("sequence must contain at least one model");
    if (seq.r.size() != m) fail_validation("d and R must have the same length");
    if (!std::isfinite(seq.r0) || seq.r0 < 0.0) fail_validation("R0 must be finite and nonnegative");
    long prev_d = 0;
    for (std::size_t k = 0; k < m; ++k) {
        if (seq.d[k] <= prev_d) fail_validation("d must be strictly increasing positive integers");
        prev_d = seq.d[k];
        if (!std::isfinite(seq.r[k]) || seq.r[k] < 0.0) fail_validation("R must be finite and nonnegative");
    }
    for (std::size_t k = 1; k <= m; ++k) {
        if (!(seq.risk(k) < seq.risk(k - 1)))
            fail_degenerate("non-strict risk decrease at model " + std::to_string(k) +
                            ": R_k must be strictly below R_{k-1} (distinct nested models)");
    }
    if (seq.coef_blocks) {
        const auto& blocks = *seq.coef_blocks;
        if (blocks.size() != m) fail_validation("coef_blocks must have one block per model");
        for (std::size_t k = 1; k <= m; ++k) {
            const auto& b = blocks[k - 1];
            if (!b.index.empty() && b.index.size() != b.coef.size())
                fail_validation("coef block " + std::to_string(k) + " has mismatched index/coef lengths");
            if (static_cast<double>(b.coef.size()) != seq.dim_step(k))
                fail_validation("coef block " + std::to_string(k) + " size differs from d_k - d_{k-1}");
            double ss = 0.0;
            for (double c : b.coef) ss += c * c;
            const double drop = seq.risk_drop(k);
            if (std::abs(ss - drop) > 1e-10 * std::max(seq.r0, 1e-300))
                fail_validation("coef block " + std::to_string(k) +
                                " squared norm disagrees with R_{k-1} - R_k");
        }
    }
}

OrthonormalBasis orthonormalize(const DesignMatrix& design) {
    check_design(design);
    if (design.values.isZero(0.0)) fail_degenerate("degenerate design: all entries are zero");
    std::vector<std::size_t> order(design.cols());
    std::iota(order.begin(), order.end(), std::size_t{0});
    return gram_schmidt(design.values, order);
}

NestedModelSequence fit_nested(const OrthonormalBasis& basis, std::span<const double> y,
                               const NestedIndexSets& sets, double sigma2) {
    const std::size_t n = basis.n();
    if (y.size() != n) fail_validation("response length " + std::to_string(y.size()) +
                                       " does not match n = " + std::to_string(n));
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
        fail_validation("sigma2 must be a finite positive number (the noise level is assumed known)");
    validate(sets, basis.size());

    const Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(n));
    if (!yv.allFinite()) fail_validation("response contains non-finite values");

    NestedModelSequence seq;
    seq.sigma2 = sigma2;
    seq.n = n;
    seq.r0 = yv.squaredNorm() / static_cast<double>(n);
    std::vector<CoefBlock> blocks;

    std::set<std::size_t> seen;
    double explained = 0.0;
    for (const auto& set : sets.sets) {
        CoefBlock block;
        for (std::size_t idx : set) {
            if (seen.count(idx)) continue;
            seen.insert(idx);
            const double c = empirical_dot(yv, basis.psi.col(static_cast<Eigen::Index>(idx)));
            block.index.push_back(idx);
            block.coef.push_back(c);
            explained += c * c;
        }
        double rk = seq.r0 - explained;
        if (rk < 0.0) {
            // Bessel's inequality; anything beyond rounding means a bad basis.
            if (rk < -1e-10 * std::max(seq.r0, 1.0)) fail_validation("basis is not orthonormal: R_k < 0");
            rk = 0.0;
        }
        const double prev = seq.r.empty() ? seq.r0 : seq.r.back();
        if (!(rk < prev))
            fail_degenerate("non-strict risk decrease at model " + std::to_string(seq.r.size() + 1) +
                            ": the response is orthogonal to the added basis functions");
        seq.d.push_back(static_cast<long>(set.size()));
        seq.r.push_back(rk);
        blocks.push_back(std::move(block));
    }
    seq.coef_blocks = std::move(blocks);
    return seq;
}

NestedIndexSets stepwise_deletion_order(const DesignMatrix& design, std::span<const double> y) {
    check_design(design);
    if (y.size() != design.rows()) fail_validation("response length does not match design rows");
    const OrthonormalBasis check = orthonormalize(design);
    if (!check.dropped.empty()) fail_degenerate("rank-deficient design: stepwise deletion needs full column rank");

    const Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(y.size()));
    const Eigen::VectorXd response = yv;
    const std::size_t p = design.cols();
    std::vector<std::size_t> active(p);
    std::iota(active.begin(), active.end(), std::size_t{0});

    std::vector<std::vector<std::size_t>> chain{active};
    while (active.size() > 1) {
        std::size_t best_pos = 0;
        double best_risk = 0.0;
        for (std::size_t pos = 0; pos < active.size(); ++pos) {
            std::vector<std::size_t> trial;
            trial.reserve(active.size() - 1);
            for (std::size_t j = 0; j < active.size(); ++j)
                if (j != pos) trial.push_back(active[j]);
            const double risk = residual_risk(design.values, trial, response);
            if (pos == 0 || risk < best_risk) {
                best_risk = risk;
                best_pos = pos;
            }
        }
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(best_pos));
        chain.push_back(active);
    }
    std::reverse(chain.begin(), chain.end());
    return NestedIndexSets{std::move(chain)};
}

std::pair<OrthonormalBasis, NestedIndexSets> nested_basis(const DesignMatrix& design,
                                                          const NestedIndexSets& sets) {
    check_design(design);
    validate(sets, design.cols());
    std::vector<std::size_t> order;
    std::set<std::size_t> seen;
    for (const auto& set : sets.sets)
        for (std::size_t idx : set)
            if (seen.insert(idx).second) order.push_back(idx);

    OrthonormalBasis basis = gram_schmidt(design.values, order);
    if (!basis.dropped.empty()) fail_degenerate("rank-deficient design: nested models are not distinct");

    std::vector<long> dims;
    for (const auto& set : sets.sets) dims.push_back(static_cast<long>(set.size()));
    return {std::move(basis), prefix_sets(dims)};
}

NestedIndexSets prefix_sets(std::span<const long> dims) {
    NestedIndexSets out;
    for (long dk : dims) {
        if (dk < 1) fail_validation("model dimensions must be positive");
        std::vector<std::size_t> set(static_cast<std::size_t>(dk));
        std::iota(set.begin(), set.end(), std::size_t{0});
        out.sets.push_back(std::move(set));
    }
    return out;
}

std::vector<double> telescoping_coefficients(std::span<const double> alpha) {
    std::vector<double> c(alpha.size());
    double tail = 0.0;
    for (std::size_t k = alpha.size(); k-- > 0;) {
        tail += alpha[k];
        c[k] = tail;
    }
    return c;
}

double combination_risk(const NestedModelSequence& seq, std::span<const double> alpha) {
    if (alpha.size() != seq.models())
        fail_validation("weight vector length " + std::to_string(alpha.size()) + " does not match M = " +
                        std::to_string(seq.models()));
    for (double a : alpha)
        if (!std::isfinite(a)) fail_validation("weights must be finite");
    const auto c = telescoping_coefficients(alpha);
    double risk = seq.r0;
    for (std::size_t k = 1; k <= seq.models(); ++k) {
        const double ck = c[k - 1];
        risk += seq.risk_drop(k) * (ck * ck - 2.0 * ck);
    }
    return risk;
}

std::vector<double> predict_combination(const Eigen::MatrixXd& basis_at_points,
                                        const NestedModelSequence& seq,
                                        std::span<const double> alpha) {
    if (!seq.coef_blocks) fail_validation("prediction needs coefficient blocks");
    if (alpha.size() != seq.models()) fail_validation("weight vector length does not match M");
    const auto c = telescoping_coefficients(alpha);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(basis_at_points.rows());
    for (std::size_t k = 0; k < seq.models(); ++k) {
        const auto& block = (*seq.coef_blocks)[k];
        if (block.index.size() != block.coef.size())
            fail_validation("prediction needs basis indices for every coefficient");
        for (std::size_t j = 0; j < block.index.size(); ++j) {
            const auto col = static_cast<Eigen::Index>(block.index[j]);
            if (col >= basis_at_points.cols()) fail_validation("basis evaluation has too few columns");
            out += (c[k] * block.coef[j]) * basis_at_points.col(col);
        }
    }
    return {out.data(), out.data() + out.size()};
}

double estimate_sigma2(const NestedModelSequence& seq) {
    const double n = static_cast<double>(seq.n);
    const double dm = seq.dim(seq.models());
    if (!(n > dm)) fail_validation("estimating sigma2 needs n > d_M");
    return seq.risk(seq.models()) * n / (n - dm);
}

}  // namespace nestack
