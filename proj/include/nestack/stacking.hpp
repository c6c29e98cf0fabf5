#pragma once

// Stacking weights for nested projection families: the minimax sequence γ̂,
// best single model selection, penalized / ℓ0 / Q-aggregation weights and
// randomized ensembles. Model indices are 1..M; vectors are stored 0-based.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nestack/nested_models.hpp"

namespace nestack {

inline constexpr double kWeightZeroTolerance = 1e-12;
inline constexpr std::size_t kExactEnsembleLimit = 10000;

struct GammaSequence {
    std::vector<double> gamma;  // γ̂_1..γ̂_M

    std::size_t size() const { return gamma.size(); }
    /// γ̂_k for k in 0..M+1 with γ̂_0 = 0 and γ̂_{M+1} = +inf.
    double at(std::size_t k) const;
};

enum class WeightMethod { penalized, l0, qagg, ensemble, best, fixed };

std::string to_string(WeightMethod m);
WeightMethod parse_weight_method(const std::string& name);

struct StackWeights {
    WeightMethod method = WeightMethod::penalized;
    std::vector<double> alpha;
    double sum = 0.0;
    std::size_t l0 = 0;
    long dim = 0;
    double df = 0.0;
    std::vector<double> gamma;
    /// qagg only: γ̌ (null model excluded from the inner max).
    std::vector<double> gamma_check;
    std::optional<std::size_t> m_hat;
    /// β sequence for l0 and qagg (α_k = β_{k+1} - β_k, β_{M+1} = 1).
    std::vector<double> beta;
    /// Ensemble only: averaged indicators P_k and their MC standard errors.
    std::vector<double> inclusion;
    std::vector<double> inclusion_se;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> draws;
    bool exact = false;
};

/// Fills sum, l0, dim and df from alpha.
StackWeights make_weights(WeightMethod method, const NestedModelSequence& seq, std::vector<double> alpha);

struct SelectionResult {
    std::size_t m_hat = 0;
    std::vector<double> criteria;  // k = 0..M
};

/// PAVA on z_k = (σ²/n) Δd_k / ΔR_k with weights ΔR_k.
GammaSequence gamma_sequence(const NestedModelSequence& seq);

/// argmin_k R_k + λ σ² d_k / n over k = 0..M, smallest index on ties.
SelectionResult best_single(const NestedModelSequence& seq, double lambda);

/// max{k : γ̂_k < 1/λ} (0 if none).
std::size_t selected_by_gamma(const GammaSequence& gamma, double lambda);

/// Closed-form minimizer of R(α) + (2τσ²/n) df(α) + ((λ-τ)₊²/λ)(σ²/n) dim(α), α >= 0.
StackWeights stack_weights(const NestedModelSequence& seq, double tau, double lambda);

double penalized_objective(const NestedModelSequence& seq, std::span<const double> alpha, double tau,
                           double lambda);

/// Weights minimizing R(α) + (2σ²/n) df(α) + (4σ²/n)‖α‖₀ through reduced
/// isotonic regression. `value_weighted` switches to the ξβ_k jump charge.
StackWeights l0_stack_weights(const NestedModelSequence& seq, bool value_weighted = false);

/// γ̌: γ̌_1 = 0 and for k >= 2 the minimax sequence with j restricted to j >= 1.
GammaSequence qagg_gamma(const NestedModelSequence& seq);

/// Closed-form Q-aggregation weights on the simplex, 0 < η < 1.
StackWeights qagg_weights(const NestedModelSequence& seq, double eta);

/// γ̂_k(I) for k = 1..M over knots I ⊆ {1..M} (1-based), +inf beyond max I.
GammaSequence subset_gamma(const NestedModelSequence& seq, std::span<const std::size_t> knots);

/// Averages 1(γ̂_k(I) < 1/λ) over subsets I of size m-1. With `draws` empty
/// every subset is enumerated (needs C(M, m-1) <= 10^4); otherwise `draws`
/// uniform subsets are sampled from `seed`.
StackWeights randomized_ensemble(const NestedModelSequence& seq, std::size_t m, std::optional<std::size_t> draws,
                                 double lambda, std::uint64_t seed);

/// 1 - (d_k - 2) / ((n/σ²)(R_0 - R_k)); optionally clipped at 0.
double james_stein_factor(const NestedModelSequence& seq, std::size_t k, bool positive_part = false);

/// R(α) + (2σ²/n)df + (4σ²/n)‖α‖₀ - (4σ²/n) αᵀα₀ - σ², α₀(k) = #{j <= k : α_j != 0}.
double adaptive_risk_correction(const NestedModelSequence& seq, std::span<const double> alpha);

/// Binomial coefficient saturating at SIZE_MAX.
std::size_t binomial(std::size_t n, std::size_t k);

}  // namespace nestack
