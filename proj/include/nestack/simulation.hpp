#pragma once

// Fixed-design Gaussian Monte Carlo harness.
//
// Data are y = f + σε at the n design points with f = Σ_l θ_l ψ_l. The
// default design is the sequence model ψ_l(x_i) = √n·1(i = l), where the
// empirical coefficients are Y_l = θ_l + (σ/√n) ε_l and nested projections
// are coefficient truncations. Every estimator here acts on the nested
// family through telescoping coefficients c_1..c_M, so losses, training
// errors and covariance terms are evaluated in coefficient space.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nestack/nested_models.hpp"

namespace nestack {

inline constexpr double kCriticalZ99 = 2.5758293035489004;

struct Scenario {
    std::string name = "custom";
    std::size_t n = 0;
    double sigma = 1.0;
    /// θ_l = <f, ψ_l>; basis functions beyond this vector carry no signal.
    std::vector<double> theta;
    std::vector<long> d;
    /// User basis (n x L). Empty means the sequence model.
    std::optional<Eigen::MatrixXd> basis;

    std::size_t models() const { return d.size(); }
    double noise_scale() const { return sigma * sigma / static_cast<double>(n); }
};

struct ScenarioConfig {
    std::optional<std::string> preset;
    std::optional<std::size_t> n;
    std::optional<std::size_t> models;
    std::optional<double> sigma;
    std::optional<std::vector<long>> d;
    std::optional<long> d_step;
    std::optional<std::vector<double>> coefficients;
    std::optional<double> signal_scale;
    std::optional<double> decay_rate;
    std::optional<Eigen::MatrixXd> basis;
};

/// Presets: "theorem1-default", "null-signal", "breiman-like". Explicit
/// fields override preset values.
Scenario make_scenario(const ScenarioConfig& config);
void validate(const Scenario& scenario);

enum class EstimatorKind {
    stack,
    best,
    l0stack,
    qagg,
    ensemble,
    james_stein,
    fixed_projection,
    fixed_weights,
    oracle_stack,
};

struct EstimatorSpec {
    EstimatorKind kind = EstimatorKind::stack;
    double tau = 0.5;
    double lambda = 2.0;
    double eta = 0.5;
    std::size_t m = 2;
    /// Ensemble draws; 0 enumerates every subset.
    std::size_t draws = 0;
    std::size_t k = 0;
    bool positive_part = false;
    bool value_weighted = false;
    std::vector<double> alpha;

    std::string label() const;
    /// Weights do not depend on the data.
    bool nonadaptive() const;
    /// Estimator is a nonnegative combination Σ α_k μ̂_k.
    bool has_weights() const;
};

std::string to_string(EstimatorKind kind);
EstimatorKind parse_estimator_kind(const std::string& name);
void validate(const EstimatorSpec& spec, const Scenario& scenario);

/// Population-risk minimizer over α >= 0, computed by grid initialization
/// followed by exact coordinate descent.
struct OracleStack {
    std::vector<double> alpha;
    double risk = 0.0;
    double tolerance = 0.0;  // final max coordinate change
    std::size_t sweeps = 0;
};

/// E‖f - Σ α_k μ̂_k‖² in closed form (orthonormal design, known θ).
double population_risk(const Scenario& scenario, const std::vector<double>& alpha);
OracleStack oracle_stack(const Scenario& scenario, double grid_step = 0.01);

/// Per-replication seed derived from (base, r) with splitmix64.
std::uint64_t replication_seed(std::uint64_t base, std::uint64_t r);

struct ReplicationDraw {
    NestedModelSequence seq;
    std::vector<double> coefficients;  // Y_l for l < L (basis size)
};

/// Draws the noise for one replication and fits the nested family.
ReplicationDraw draw_replication(const Scenario& scenario, std::uint64_t seed);

struct EstimatorOutcome {
    bool ok = false;
    std::string error;
    double loss = 0.0;
    double train = 0.0;
    /// (n/σ²) Σ_l (Y_l - θ_l) f̂_l: unbiased for df.
    double df = 0.0;
    /// loss - (train + 2σ² df_known / n - σ²); df_known = Σ c_k Δd_k.
    double identity_known = 0.0;
    /// loss - (train + 2σ² df / n - σ²) with the per-replication df term.
    double identity_mc = 0.0;
    /// loss - adaptive_risk_correction, weight-type estimators only.
    std::optional<double> adaptive;
    /// Plug-in expectand of the James-Stein risk gap, james_stein only.
    std::optional<double> js_plugin;
    std::vector<double> alpha;
};

struct ReplicationResult {
    std::vector<EstimatorOutcome> estimators;
    /// σ²τ(2-τ)/n · min_k (d_k - 4k/(2-τ))² / ((n/σ²)(R_0 - R_k)), when τ is set.
    std::optional<double> improve_plugin;
};

struct ExperimentOptions {
    std::size_t reps = 1000;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    /// τ for the first-term plug-in; unset skips it.
    std::optional<double> improve_tau;
};

ReplicationResult run_replication(const Scenario& scenario, const std::vector<EstimatorSpec>& estimators,
                                  std::uint64_t seed, std::optional<double> improve_tau = std::nullopt);

std::vector<ReplicationResult> simulate_replications(const Scenario& scenario,
                                                     const std::vector<EstimatorSpec>& estimators,
                                                     const ExperimentOptions& options);

struct Summary {
    double mean = 0.0;
    double se = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::size_t count = 0;
};

/// Mean, se = sd/√N and 99% normal interval. Neumaier summation in input order.
Summary summarize(const std::vector<double>& values);

struct EstimatorReport {
    std::string label;
    Summary loss;
    Summary train;
    Summary df;
    Summary identity_known;
    Summary identity_mc;
    std::optional<Summary> adaptive;
    std::optional<Summary> js_plugin;
    /// JS: loss(projection k) - loss(JS k) - plug-in, on the same draws.
    std::optional<Summary> js_gap_minus_plugin;
    std::optional<double> known_df;
    std::optional<double> exact_risk;
    std::size_t failures = 0;
    std::string first_error;
};

struct GapReport {
    std::string first;
    std::string second;
    Summary gap;  // loss(first) - loss(second)
};

struct RiskReport {
    std::string scenario;
    std::uint64_t seed = 0;
    std::size_t reps = 0;
    std::size_t threads = 1;
    double ci_level = 0.99;
    std::vector<EstimatorReport> estimators;
    std::vector<GapReport> gaps;
    std::optional<Summary> improve_first_term;
    /// gap(best, stack) - first-term plug-in, per replication.
    std::optional<Summary> gap_minus_plugin;
    std::optional<OracleStack> oracle;
    std::vector<std::string> warnings;

    const EstimatorReport& estimator(const std::string& label) const;
    const GapReport& gap(const std::string& first, const std::string& second) const;
};

RiskReport monte_carlo(const Scenario& scenario, const std::vector<EstimatorSpec>& estimators,
                       const ExperimentOptions& options);

/// Paired best(λ) vs stack(τ, λ) experiment with the first-term plug-in.
/// Emits a warning unless 0 < τ < 2 and d_k - d_{k-1} >= 4/(2-τ) for all k.
RiskReport risk_gap_experiment(const Scenario& scenario, double tau, double lambda, const ExperimentOptions& options,
                               std::vector<EstimatorSpec> extra = {});

/// Dimension condition of the dominance result.
bool dimension_condition_holds(const std::vector<long>& d, double tau);

struct DfEstimate {
    std::string label;
    Summary df;
    Summary identity_known;
    Summary identity_mc;
    std::optional<double> known_df;
};

DfEstimate estimate_df(const Scenario& scenario, const EstimatorSpec& estimator, const ExperimentOptions& options);

struct BreimanStats {
    struct Entry {
        std::string label;
        Summary l0;
        Summary sum;
        Summary dim_stack;
        Summary dim_best;
        std::size_t sum_violations = 0;   // Σα >= 1
        std::size_t l0_violations = 0;    // ‖α‖₀ > M
        /// l0: non-null fit with dim < dim(best, λ=2). penalized: dim > dim(best, λ).
        std::size_t dim_violations = 0;
        std::size_t null_solutions = 0;
    };
    std::vector<Entry> entries;
    std::size_t reps = 0;
};

/// Descriptive statistics of penalized (τ, λ) and ℓ0 stacking weights.
BreimanStats breiman_stats(const Scenario& scenario, const ExperimentOptions& options, double tau = 0.5,
                           double lambda = 2.0);

}  // namespace nestack
