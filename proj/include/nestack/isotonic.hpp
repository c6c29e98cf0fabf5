#pragma once

// Weighted isotonic regression: PAVA, a slow max-min oracle, bounded fits
// through clipping, and the jump-penalized ("reduced") variant.
//
// All vectors are 0-based; blocks use inclusive [start, end] ranges.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace nestack {

struct IsotonicProblem {
    std::vector<double> z;
    std::vector<double> w;
    std::optional<double> lower;
    std::optional<double> upper;
    /// ξ, charged once per index k with β_k != β_{k+1}, where β_{M+1} = upper.
    double jump_penalty = 0.0;
    /// Charge ξ·β_k instead of ξ for each jump.
    bool value_weighted_penalty = false;

    std::size_t size() const { return z.size(); }
};

struct IsotonicBlock {
    std::size_t start = 0;
    std::size_t end = 0;
    double value = 0.0;
};

struct IsotonicFit {
    std::vector<double> beta;
    std::vector<IsotonicBlock> blocks;
    double objective = 0.0;
};

inline constexpr std::size_t kDefaultOracleCap = 64;
inline constexpr double kMergeTolerance = 1e-12;

void validate(const IsotonicProblem& problem);

/// Equal up to kMergeTolerance relative (exactly equal infinities count too).
bool nearly_equal(double a, double b);

/// Unbounded, unpenalized weighted isotonic regression in O(M).
/// Bounds and penalty fields of the problem are ignored.
IsotonicFit pava(const IsotonicProblem& problem);
IsotonicFit pava(std::span<const double> z, std::span<const double> w);

/// β_k = clip(max_{i<=k} min_{j>=k} weighted mean of z_i..z_j), O(M^3).
IsotonicFit minimax_oracle(const IsotonicProblem& problem, std::size_t cap = kDefaultOracleCap);

/// Entrywise clip of an unbounded solution into [a, b]; objective recomputed
/// against the problem's z and w.
IsotonicFit clip_fit(const IsotonicFit& fit, const IsotonicProblem& problem, double a, double b);

/// Minimizes Σ w_k (z_k - β_k)^2 + ξ #{k : β_k != β_{k+1}} over nondecreasing
/// β <= b with β_{M+1} = b. Requires `upper`. Segment boundaries are drawn
/// from the PAVA block boundaries; each segment takes its clipped weighted
/// mean, and the last segment may instead sit at b and pay no jump.
IsotonicFit reduced_isotonic(const IsotonicProblem& problem);

/// Σ w (z - β)^2 plus the jump penalty as defined on the problem.
double isotonic_objective(const IsotonicProblem& problem, std::span<const double> beta);

/// Maximal runs of nearly equal values.
std::vector<IsotonicBlock> make_blocks(std::span<const double> beta);

}  // namespace nestack
