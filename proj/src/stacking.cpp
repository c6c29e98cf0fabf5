#include "nestack/stacking.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "nestack/error.hpp"
#include "nestack/isotonic.hpp"

namespace nestack {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool nonzero(double a) { return std::abs(a) > kWeightZeroTolerance; }

void check_positive(double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) fail_validation(std::string(name) + " must be a finite positive number");
}

// PAVA over the chain 0 = i_0 < i_1 < ... < i_t of model indices.
std::vector<double> chain_gamma(const NestedModelSequence& seq, std::span<const std::size_t> chain) {
    std::vector<double> z, w;
    z.reserve(chain.size());
    w.reserve(chain.size());
    std::size_t prev = 0;
    for (std::size_t k : chain) {
        const double dr = seq.risk(prev) - seq.risk(k);
        const double dd = seq.dim(k) - seq.dim(prev);
        w.push_back(dr);
        z.push_back(seq.noise_scale() * (dd / dr));
        prev = k;
    }
    return pava(z, w).beta;
}

std::size_t count_below(std::span<const double> gamma, double threshold) {
    std::size_t k = 0;
    while (k < gamma.size() && gamma[k] < threshold) ++k;
    return k;
}

// Prefix count of γ̂_k(I) < 1/λ: γ̂(I) is constant on (i_{s-1}, i_s].
std::size_t subset_selection(const NestedModelSequence& seq, std::span<const std::size_t> knots, double threshold) {
    const auto g = chain_gamma(seq, knots);
    const std::size_t s = count_below(g, threshold);
    return s == 0 ? 0 : knots[s - 1];
}

}  // namespace

double GammaSequence::at(std::size_t k) const {
    if (k == 0) return 0.0;
    if (k > gamma.size()) return kInf;
    return gamma[k - 1];
}

std::string to_string(WeightMethod m) {
    switch (m) {
        case WeightMethod::penalized: return "penalized";
        case WeightMethod::l0: return "l0";
        case WeightMethod::qagg: return "qagg";
        case WeightMethod::ensemble: return "ensemble";
        case WeightMethod::best: return "best";
        case WeightMethod::fixed: return "fixed";
    }
    return "unknown";
}

WeightMethod parse_weight_method(const std::string& name) {
    for (auto m : {WeightMethod::penalized, WeightMethod::l0, WeightMethod::qagg, WeightMethod::ensemble,
                   WeightMethod::best, WeightMethod::fixed})
        if (to_string(m) == name) return m;
    fail_validation("unknown weight method '" + name + "'");
}

std::size_t binomial(std::size_t n, std::size_t k) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    std::size_t r = 1;
    for (std::size_t i = 1; i <= k; ++i) {
        const std::size_t num = n - k + i;
        if (r > std::numeric_limits<std::size_t>::max() / num) return std::numeric_limits<std::size_t>::max();
        r = r * num / i;
    }
    return r;
}

StackWeights make_weights(WeightMethod method, const NestedModelSequence& seq, std::vector<double> alpha) {
    if (alpha.size() != seq.models()) fail_validation("weight vector length does not match M");
    StackWeights out;
    out.method = method;
    for (std::size_t k = 1; k <= alpha.size(); ++k) {
        const double a = alpha[k - 1];
        out.sum += a;
        out.df += a * seq.dim(k);
        if (nonzero(a)) {
            ++out.l0;
            out.dim = seq.d[k - 1];
        }
    }
    out.alpha = std::move(alpha);
    return out;
}

GammaSequence gamma_sequence(const NestedModelSequence& seq) {
    validate(seq);
    std::vector<std::size_t> chain(seq.models());
    for (std::size_t k = 0; k < chain.size(); ++k) chain[k] = k + 1;
    return {chain_gamma(seq, chain)};
}

std::size_t selected_by_gamma(const GammaSequence& gamma, double lambda) {
    return count_below(gamma.gamma, 1.0 / lambda);
}

SelectionResult best_single(const NestedModelSequence& seq, double lambda) {
    validate(seq);
    check_positive(lambda, "lambda");
    SelectionResult out;
    out.criteria.resize(seq.models() + 1);
    for (std::size_t k = 0; k <= seq.models(); ++k) {
        out.criteria[k] = seq.risk(k) + lambda * seq.noise_scale() * seq.dim(k);
        if (out.criteria[k] < out.criteria[out.m_hat]) out.m_hat = k;
    }
    return out;
}

StackWeights stack_weights(const NestedModelSequence& seq, double tau, double lambda) {
    check_positive(tau, "tau");
    check_positive(lambda, "lambda");
    const auto g = gamma_sequence(seq);
    const double cut = std::min(1.0 / tau, 1.0 / lambda);
    const std::size_t m = seq.models();
    auto h = [&](std::size_t k) {
        const double gk = g.at(k);
        return gk < cut ? 1.0 - tau * gk : 0.0;
    };
    std::vector<double> alpha(m);
    for (std::size_t k = 1; k <= m; ++k) alpha[k - 1] = h(k) - h(k + 1);
    auto out = make_weights(WeightMethod::penalized, seq, std::move(alpha));
    out.gamma = g.gamma;
    out.m_hat = best_single(seq, lambda).m_hat;
    return out;
}

double penalized_objective(const NestedModelSequence& seq, std::span<const double> alpha, double tau,
                           double lambda) {
    check_positive(tau, "tau");
    check_positive(lambda, "lambda");
    for (double a : alpha)
        if (a < 0.0) fail_validation("penalized objective needs nonnegative weights");
    const auto w = make_weights(WeightMethod::fixed, seq, {alpha.begin(), alpha.end()});
    const double excess = std::max(lambda - tau, 0.0);
    return combination_risk(seq, alpha) + 2.0 * tau * seq.noise_scale() * w.df +
           (excess * excess / lambda) * seq.noise_scale() * static_cast<double>(w.dim);
}

StackWeights l0_stack_weights(const NestedModelSequence& seq, bool value_weighted) {
    validate(seq);
    const std::size_t m = seq.models();
    IsotonicProblem problem;
    problem.upper = 1.0;
    problem.jump_penalty = 4.0 * seq.noise_scale();
    problem.value_weighted_penalty = value_weighted;
    for (std::size_t k = 1; k <= m; ++k) {
        problem.w.push_back(seq.risk_drop(k));
        problem.z.push_back(seq.noise_scale() * (seq.dim_step(k) / seq.risk_drop(k)));
    }
    auto fit = reduced_isotonic(problem);
    std::vector<double> alpha(m);
    for (std::size_t k = 0; k < m; ++k) alpha[k] = (k + 1 < m ? fit.beta[k + 1] : 1.0) - fit.beta[k];
    auto out = make_weights(WeightMethod::l0, seq, std::move(alpha));
    out.gamma = gamma_sequence(seq).gamma;
    out.beta = std::move(fit.beta);
    out.m_hat = best_single(seq, 2.0).m_hat;
    return out;
}

GammaSequence qagg_gamma(const NestedModelSequence& seq) {
    validate(seq);
    const std::size_t m = seq.models();
    std::vector<double> z, w;
    for (std::size_t k = 2; k <= m; ++k) {
        w.push_back(seq.risk_drop(k));
        z.push_back(seq.noise_scale() * (seq.dim_step(k) / seq.risk_drop(k)));
    }
    GammaSequence out{{0.0}};
    if (!z.empty()) {
        const auto tail = pava(z, w).beta;
        out.gamma.insert(out.gamma.end(), tail.begin(), tail.end());
    }
    return out;
}

StackWeights qagg_weights(const NestedModelSequence& seq, double eta) {
    if (!(eta > 0.0 && eta < 1.0)) fail_validation("eta must lie in (0, 1)");
    const auto g = qagg_gamma(seq);
    const std::size_t m = seq.models();
    std::vector<double> beta(m);
    for (std::size_t k = 0; k < m; ++k)
        beta[k] = 1.0 - std::clamp((1.0 - eta / 2.0 - g.gamma[k]) / (1.0 - eta), 0.0, 1.0);
    beta[0] = 0.0;
    std::vector<double> alpha(m);
    for (std::size_t k = 0; k < m; ++k) alpha[k] = (k + 1 < m ? beta[k + 1] : 1.0) - beta[k];
    auto out = make_weights(WeightMethod::qagg, seq, std::move(alpha));
    out.gamma = gamma_sequence(seq).gamma;
    out.gamma_check = g.gamma;
    out.beta = std::move(beta);
    return out;
}

GammaSequence subset_gamma(const NestedModelSequence& seq, std::span<const std::size_t> knots) {
    validate(seq);
    if (knots.empty()) fail_validation("subset_gamma needs a nonempty knot set");
    std::vector<std::size_t> sorted(knots.begin(), knots.end());
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        fail_validation("knot set has repeated indices");
    if (sorted.front() < 1 || sorted.back() > seq.models()) fail_validation("knots must lie in 1..M");

    const auto g = chain_gamma(seq, sorted);
    GammaSequence out;
    out.gamma.assign(seq.models(), kInf);
    std::size_t s = 0;
    for (std::size_t k = 1; k <= sorted.back(); ++k) {
        while (sorted[s] < k) ++s;
        out.gamma[k - 1] = g[s];
    }
    return out;
}

StackWeights randomized_ensemble(const NestedModelSequence& seq, std::size_t m, std::optional<std::size_t> draws,
                                 double lambda, std::uint64_t seed) {
    validate(seq);
    check_positive(lambda, "lambda");
    const std::size_t models = seq.models();
    if (m < 2 || m > models + 1) fail_validation("ensemble subset parameter m must lie in 2..M+1");
    const std::size_t size = m - 1;
    const double threshold = 1.0 / lambda;

    // counts[s]: draws whose restricted selection is model s
    std::vector<double> counts(models + 1, 0.0);
    double total = 0.0;
    std::vector<std::size_t> knots(size);

    auto record = [&](std::size_t selected) {
        counts[selected] += 1.0;
        total += 1.0;
    };

    StackWeights out;
    if (!draws) {
        if (binomial(models, size) > kExactEnsembleLimit)
            fail_validation("exact enumeration needs C(M, m-1) <= 10000; pass a draw count to sample instead");
        std::vector<bool> mask(models, false);
        std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(size), true);
        do {
            std::size_t j = 0;
            for (std::size_t k = 0; k < models; ++k)
                if (mask[k]) knots[j++] = k + 1;
            record(subset_selection(seq, knots, threshold));
        } while (std::prev_permutation(mask.begin(), mask.end()));
        out.exact = true;
    } else {
        if (*draws < 1) fail_validation("ensemble needs at least one draw");
        std::mt19937_64 rng(seed);
        std::vector<std::size_t> pool(models);
        for (std::size_t b = 0; b < *draws; ++b) {
            for (std::size_t k = 0; k < models; ++k) pool[k] = k + 1;
            for (std::size_t j = 0; j < size; ++j) {
                std::uniform_int_distribution<std::size_t> pick(j, models - 1);
                std::swap(pool[j], pool[pick(rng)]);
            }
            std::copy(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(size), knots.begin());
            std::sort(knots.begin(), knots.end());
            record(subset_selection(seq, knots, threshold));
        }
        out.seed = seed;
        out.draws = *draws;
    }

    // P_k = #{selected >= k} / total
    std::vector<double> p(models + 2, 0.0);
    double running = 0.0;
    for (std::size_t k = models; k >= 1; --k) {
        running += counts[k];
        p[k] = running / total;
    }
    std::vector<double> alpha(models);
    for (std::size_t k = 1; k <= models; ++k) alpha[k - 1] = p[k] - p[k + 1];
    auto weights = make_weights(WeightMethod::ensemble, seq, std::move(alpha));
    weights.exact = out.exact;
    weights.seed = out.seed;
    weights.draws = out.draws;
    weights.gamma = gamma_sequence(seq).gamma;
    weights.m_hat = best_single(seq, lambda).m_hat;
    weights.inclusion.assign(p.begin() + 1, p.begin() + 1 + static_cast<std::ptrdiff_t>(models));
    weights.inclusion_se.assign(models, 0.0);
    if (!weights.exact && total > 1.0) {
        for (std::size_t k = 0; k < models; ++k) {
            const double pk = weights.inclusion[k];
            weights.inclusion_se[k] = std::sqrt(pk * (1.0 - pk) / (total - 1.0));
        }
    }
    return weights;
}

double james_stein_factor(const NestedModelSequence& seq, std::size_t k, bool positive_part) {
    validate(seq);
    if (k < 1 || k > seq.models()) fail_validation("James-Stein model index must lie in 1..M");
    const double factor = 1.0 - (seq.dim(k) - 2.0) / ((seq.r0 - seq.risk(k)) / seq.noise_scale());
    return positive_part ? std::max(factor, 0.0) : factor;
}

double adaptive_risk_correction(const NestedModelSequence& seq, std::span<const double> alpha) {
    for (double a : alpha)
        if (a < 0.0) fail_validation("adaptive risk correction needs nonnegative weights");
    const auto w = make_weights(WeightMethod::fixed, seq, {alpha.begin(), alpha.end()});
    double cross = 0.0;
    std::size_t prefix = 0;
    for (double a : alpha) {
        if (nonzero(a)) ++prefix;
        cross += a * static_cast<double>(prefix);
    }
    const double s = seq.noise_scale();
    return combination_risk(seq, alpha) + 2.0 * s * w.df + 4.0 * s * static_cast<double>(w.l0) - 4.0 * s * cross -
           seq.sigma2;
}

}  // namespace nestack
