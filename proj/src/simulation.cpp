#include "nestack/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <mutex>
#include <random>
#include <thread>

#include "nestack/error.hpp"
#include "nestack/stacking.hpp"

namespace nestack {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

struct Neumaier {
    double sum = 0.0;
    double comp = 0.0;
    void add(double x) {
        const double t = sum + x;
        if (std::abs(sum) >= std::abs(x)) {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    double value() const { return sum + comp; }
};

double theta_at(const Scenario& s, std::size_t l) { return l < s.theta.size() ? s.theta[l] : 0.0; }

std::size_t basis_size(const Scenario& s) {
    return s.basis ? static_cast<std::size_t>(s.basis->cols()) : s.n;
}

// Θ_k = Σ_{l in block k} θ_l² and the signal beyond the largest model.
std::pair<std::vector<double>, double> block_signal(const Scenario& s) {
    std::vector<double> blocks(s.models(), 0.0);
    std::size_t lo = 0;
    for (std::size_t k = 0; k < s.models(); ++k) {
        const auto hi = static_cast<std::size_t>(s.d[k]);
        for (std::size_t l = lo; l < hi; ++l) blocks[k] += theta_at(s, l) * theta_at(s, l);
        lo = hi;
    }
    double tail = 0.0;
    for (std::size_t l = lo; l < s.theta.size(); ++l) tail += s.theta[l] * s.theta[l];
    return {blocks, tail};
}

void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& body) {
    threads = std::max<std::size_t>(1, std::min(threads, count));
    if (threads == 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex failure_mutex;
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            try {
                for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) body(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next.store(count);
            }
        });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

std::vector<double> unit_weights(std::size_t models, std::size_t k) {
    std::vector<double> a(models, 0.0);
    if (k >= 1) a[k - 1] = 1.0;
    return a;
}

// Telescoping coefficients c_1..c_M plus the weights when the estimator has them.
struct Fitted {
    std::vector<double> c;
    std::vector<double> alpha;
    bool weights = false;
};

Fitted fit_estimator(const EstimatorSpec& spec, const NestedModelSequence& seq, std::uint64_t seed) {
    const std::size_t m = seq.models();
    Fitted out;
    out.weights = true;
    switch (spec.kind) {
        case EstimatorKind::stack: out.alpha = stack_weights(seq, spec.tau, spec.lambda).alpha; break;
        case EstimatorKind::best: out.alpha = unit_weights(m, best_single(seq, spec.lambda).m_hat); break;
        case EstimatorKind::l0stack: out.alpha = l0_stack_weights(seq, spec.value_weighted).alpha; break;
        case EstimatorKind::qagg: out.alpha = qagg_weights(seq, spec.eta).alpha; break;
        case EstimatorKind::ensemble: {
            std::optional<std::size_t> draws;
            if (spec.draws > 0) draws = spec.draws;
            out.alpha = randomized_ensemble(seq, spec.m, draws, spec.lambda, splitmix64(seed ^ 0xE45EB1EULL)).alpha;
            break;
        }
        case EstimatorKind::fixed_projection: out.alpha = unit_weights(m, spec.k); break;
        case EstimatorKind::fixed_weights:
        case EstimatorKind::oracle_stack: out.alpha = spec.alpha; break;
        case EstimatorKind::james_stein: {
            const double factor = james_stein_factor(seq, spec.k, spec.positive_part);
            out.c.assign(m, 0.0);
            for (std::size_t j = 0; j < spec.k; ++j) out.c[j] = factor;
            out.weights = false;
            return out;
        }
    }
    out.c = telescoping_coefficients(out.alpha);
    return out;
}

}  // namespace

// ---------------------------------------------------------------- scenarios

Scenario make_scenario(const ScenarioConfig& config) {
    Scenario s;
    std::size_t models = 10;
    long step = 3;
    double scale = 1.0;
    double rate = 0.85;
    s.n = 256;
    s.sigma = 1.0;

    const std::string preset = config.preset.value_or("theorem1-default");
    if (preset == "theorem1-default") {
    } else if (preset == "null-signal") {
        scale = 0.0;
    } else if (preset == "breiman-like") {
        models = 40;
        scale = 0.3;
        rate = 0.93;
    } else if (preset == "custom") {
        if (!config.n || !(config.d || config.models)) fail_validation("custom scenario needs n and a d schedule");
    } else {
        fail_validation("unknown scenario preset '" + preset + "'");
    }
    s.name = preset;

    if (config.n) s.n = *config.n;
    if (config.sigma) s.sigma = *config.sigma;
    if (config.models) models = *config.models;
    if (config.d_step) step = *config.d_step;
    if (config.signal_scale) scale = *config.signal_scale;
    if (config.decay_rate) rate = *config.decay_rate;
    if (config.basis) s.basis = config.basis;

    if (config.d) {
        s.d = *config.d;
    } else {
        if (step < 1) fail_validation("d_step must be positive");
        for (std::size_t k = 1; k <= models; ++k) s.d.push_back(step * static_cast<long>(k));
    }

    const std::size_t size = s.basis ? static_cast<std::size_t>(s.basis->cols()) : s.n;
    if (config.coefficients) {
        s.theta = *config.coefficients;
    } else {
        s.theta.assign(size, 0.0);
        double v = scale;
        for (auto& t : s.theta) {
            t = v;
            v *= rate;
        }
    }
    validate(s);
    return s;
}

void validate(const Scenario& s) {
    if (s.n < 1) fail_validation("scenario needs n >= 1");
    if (!(s.sigma > 0.0) || !std::isfinite(s.sigma)) fail_validation("sigma must be finite and positive");
    if (s.d.empty()) fail_validation("scenario needs at least one model");
    long prev = 0;
    for (long dk : s.d) {
        if (dk <= prev) fail_validation("d must be strictly increasing positive integers");
        prev = dk;
    }
    const std::size_t size = basis_size(s);
    if (static_cast<std::size_t>(s.d.back()) > s.n) fail_validation("d_M exceeds n");
    if (static_cast<std::size_t>(s.d.back()) > size) fail_validation("d_M exceeds the basis size");
    if (s.theta.size() > size) fail_validation("more true coefficients than basis functions");
    for (double t : s.theta)
        if (!std::isfinite(t)) fail_validation("true coefficients must be finite");
    if (s.basis) {
        if (static_cast<std::size_t>(s.basis->rows()) != s.n) fail_validation("basis must have n rows");
        validate_orthonormal(*s.basis);
    }
}

// ---------------------------------------------------------------- estimators

std::string to_string(EstimatorKind kind) {
    switch (kind) {
        case EstimatorKind::stack: return "stack";
        case EstimatorKind::best: return "best";
        case EstimatorKind::l0stack: return "l0stack";
        case EstimatorKind::qagg: return "qagg";
        case EstimatorKind::ensemble: return "ensemble";
        case EstimatorKind::james_stein: return "james_stein";
        case EstimatorKind::fixed_projection: return "fixed_projection";
        case EstimatorKind::fixed_weights: return "fixed_weights";
        case EstimatorKind::oracle_stack: return "oracle_stack";
    }
    return "unknown";
}

EstimatorKind parse_estimator_kind(const std::string& name) {
    for (auto k : {EstimatorKind::stack, EstimatorKind::best, EstimatorKind::l0stack, EstimatorKind::qagg,
                   EstimatorKind::ensemble, EstimatorKind::james_stein, EstimatorKind::fixed_projection,
                   EstimatorKind::fixed_weights, EstimatorKind::oracle_stack})
        if (to_string(k) == name) return k;
    fail_validation("unknown estimator kind '" + name + "'");
}

std::string EstimatorSpec::label() const {
    switch (kind) {
        case EstimatorKind::stack: return "stack(tau=" + num(tau) + ",lambda=" + num(lambda) + ")";
        case EstimatorKind::best: return "best(lambda=" + num(lambda) + ")";
        case EstimatorKind::l0stack: return value_weighted ? "l0stack(weighted)" : "l0stack";
        case EstimatorKind::qagg: return "qagg(eta=" + num(eta) + ")";
        case EstimatorKind::ensemble:
            return "ensemble(m=" + std::to_string(m) + ",B=" + (draws ? std::to_string(draws) : "exact") +
                   ",lambda=" + num(lambda) + ")";
        case EstimatorKind::james_stein:
            return std::string(positive_part ? "james_stein_plus(k=" : "james_stein(k=") + std::to_string(k) + ")";
        case EstimatorKind::fixed_projection: return "fixed_projection(k=" + std::to_string(k) + ")";
        case EstimatorKind::fixed_weights: {
            std::string s = "fixed_weights(";
            for (std::size_t i = 0; i < alpha.size(); ++i) s += (i ? "," : "") + num(alpha[i]);
            return s + ")";
        }
        case EstimatorKind::oracle_stack: return "oracle_stack";
    }
    return "unknown";
}

bool EstimatorSpec::nonadaptive() const {
    return kind == EstimatorKind::fixed_projection || kind == EstimatorKind::fixed_weights ||
           kind == EstimatorKind::oracle_stack;
}

bool EstimatorSpec::has_weights() const { return kind != EstimatorKind::james_stein; }

void validate(const EstimatorSpec& spec, const Scenario& scenario) {
    const std::size_t m = scenario.models();
    auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
    switch (spec.kind) {
        case EstimatorKind::stack:
            if (!positive(spec.tau) || !positive(spec.lambda)) fail_validation("stack needs tau, lambda > 0");
            break;
        case EstimatorKind::best:
            if (!positive(spec.lambda)) fail_validation("best needs lambda > 0");
            break;
        case EstimatorKind::qagg:
            if (!(spec.eta > 0.0 && spec.eta < 1.0)) fail_validation("qagg needs 0 < eta < 1");
            break;
        case EstimatorKind::ensemble:
            if (spec.m < 2 || spec.m > m + 1) fail_validation("ensemble needs 2 <= m <= M+1");
            if (!positive(spec.lambda)) fail_validation("ensemble needs lambda > 0");
            if (spec.draws == 0 && binomial(m, spec.m - 1) > kExactEnsembleLimit)
                fail_validation("ensemble enumeration too large; set draws");
            break;
        case EstimatorKind::james_stein:
            if (spec.k < 1 || spec.k > m) fail_validation("james_stein needs 1 <= k <= M");
            break;
        case EstimatorKind::fixed_projection:
            if (spec.k > m) fail_validation("fixed_projection needs 0 <= k <= M");
            break;
        case EstimatorKind::fixed_weights:
            if (spec.alpha.size() != m) fail_validation("fixed_weights needs M weights");
            for (double a : spec.alpha)
                if (!std::isfinite(a)) fail_validation("fixed weights must be finite");
            break;
        case EstimatorKind::l0stack:
        case EstimatorKind::oracle_stack: break;
    }
}

// ---------------------------------------------------------------- oracle

double population_risk(const Scenario& scenario, const std::vector<double>& alpha) {
    if (alpha.size() != scenario.models()) fail_validation("weight vector length does not match M");
    const auto [theta_blocks, tail] = block_signal(scenario);
    const auto c = telescoping_coefficients(alpha);
    const double s = scenario.noise_scale();
    double risk = tail;
    long prev = 0;
    for (std::size_t k = 0; k < c.size(); ++k) {
        const double v = static_cast<double>(scenario.d[k] - prev) * s;
        risk += (1.0 - c[k]) * (1.0 - c[k]) * theta_blocks[k] + c[k] * c[k] * v;
        prev = scenario.d[k];
    }
    return risk;
}

OracleStack oracle_stack(const Scenario& scenario, double grid_step) {
    validate(scenario);
    if (!(grid_step > 0.0 && grid_step <= 1.0)) fail_validation("grid step must lie in (0, 1]");
    const std::size_t m = scenario.models();
    const auto [theta_blocks, tail] = block_signal(scenario);
    std::vector<double> v(m);
    long prev = 0;
    for (std::size_t k = 0; k < m; ++k) {
        v[k] = static_cast<double>(scenario.d[k] - prev) * scenario.noise_scale();
        prev = scenario.d[k];
    }

    OracleStack out;
    out.alpha.assign(m, 0.0);
    out.risk = population_risk(scenario, out.alpha);
    const auto steps = static_cast<std::size_t>(std::ceil(1.0 / grid_step));
    for (std::size_t k = 0; k < m; ++k) {
        for (std::size_t g = 1; g <= steps; ++g) {
            std::vector<double> trial(m, 0.0);
            trial[k] = std::min(1.0, static_cast<double>(g) * grid_step);
            const double r = population_risk(scenario, trial);
            if (r < out.risk) {
                out.risk = r;
                out.alpha = trial;
            }
        }
    }

    auto& alpha = out.alpha;
    constexpr std::size_t kMaxSweeps = 200000;
    for (out.sweeps = 0; out.sweeps < kMaxSweeps; ++out.sweeps) {
        double change = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            // c_k with α_j removed, for k <= j
            double ck = 0.0;
            for (std::size_t i = j + 1; i < m; ++i) ck += alpha[i];
            double num_acc = 0.0, den = 0.0;
            for (std::size_t k = j + 1; k-- > 0;) {
                if (k < j) ck += alpha[k];
                num_acc += (1.0 - ck) * theta_blocks[k] - ck * v[k];
                den += theta_blocks[k] + v[k];
            }
            const double updated = std::max(0.0, num_acc / den);
            change = std::max(change, std::abs(updated - alpha[j]));
            alpha[j] = updated;
        }
        out.tolerance = change;
        if (change <= 1e-14) {
            ++out.sweeps;
            break;
        }
    }
    out.risk = population_risk(scenario, alpha);
    return out;
}

// ---------------------------------------------------------------- replications

std::uint64_t replication_seed(std::uint64_t base, std::uint64_t r) {
    return splitmix64(splitmix64(base) ^ (r * 0xD1B54A32D192ED03ULL + 1));
}

ReplicationDraw draw_replication(const Scenario& s, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t n = s.n;
    std::vector<double> eps(n);
    for (auto& e : eps) e = normal(rng);

    ReplicationDraw out;
    auto& seq = out.seq;
    seq.sigma2 = s.sigma * s.sigma;
    seq.n = n;
    seq.d = s.d;

    if (!s.basis) {
        const double scale = s.sigma / std::sqrt(static_cast<double>(n));
        out.coefficients.resize(n);
        for (std::size_t l = 0; l < n; ++l) out.coefficients[l] = theta_at(s, l) + scale * eps[l];
        Neumaier r0;
        for (double y : out.coefficients) r0.add(y * y);
        seq.r0 = r0.value();
    } else {
        const auto& psi = *s.basis;
        Eigen::VectorXd theta = Eigen::VectorXd::Zero(psi.cols());
        for (std::size_t l = 0; l < s.theta.size(); ++l) theta(static_cast<Eigen::Index>(l)) = s.theta[l];
        const Eigen::Map<const Eigen::VectorXd> noise(eps.data(), static_cast<Eigen::Index>(n));
        const Eigen::VectorXd y = psi * theta + s.sigma * noise;
        const Eigen::VectorXd coef = psi.transpose() * y / static_cast<double>(n);
        out.coefficients.assign(coef.data(), coef.data() + coef.size());
        seq.r0 = y.squaredNorm() / static_cast<double>(n);
    }

    double explained = 0.0;
    std::size_t lo = 0;
    for (long dk : s.d) {
        for (auto l = lo; l < static_cast<std::size_t>(dk); ++l) explained += out.coefficients[l] * out.coefficients[l];
        lo = static_cast<std::size_t>(dk);
        seq.r.push_back(std::max(0.0, seq.r0 - explained));
    }
    return out;
}

ReplicationResult run_replication(const Scenario& s, const std::vector<EstimatorSpec>& estimators, std::uint64_t seed,
                                  std::optional<double> improve_tau) {
    const auto draw = draw_replication(s, seed);
    const auto& seq = draw.seq;
    const auto& y = draw.coefficients;
    const std::size_t m = s.models();
    const double noise = s.noise_scale();
    const double sigma2 = s.sigma * s.sigma;

    // Per-block sufficient pieces, shared by all estimators.
    std::vector<double> cross(m, 0.0);  // Σ (Y - θ) Y
    std::vector<double> yy(m, 0.0);     // Σ Y²
    std::vector<double> ty(m, 0.0);     // Σ θ Y
    std::vector<double> tt(m, 0.0);     // Σ θ²
    std::size_t lo = 0;
    for (std::size_t k = 0; k < m; ++k) {
        const auto hi = static_cast<std::size_t>(s.d[k]);
        for (std::size_t l = lo; l < hi; ++l) {
            const double t = theta_at(s, l);
            cross[k] += (y[l] - t) * y[l];
            yy[k] += y[l] * y[l];
            ty[k] += t * y[l];
            tt[k] += t * t;
        }
        lo = hi;
    }
    double tail = 0.0;
    for (std::size_t l = lo; l < s.theta.size(); ++l) tail += s.theta[l] * s.theta[l];

    ReplicationResult result;
    result.estimators.resize(estimators.size());
    for (std::size_t e = 0; e < estimators.size(); ++e) {
        auto& out = result.estimators[e];
        try {
            const auto fitted = fit_estimator(estimators[e], seq, seed);
            const auto& c = fitted.c;
            double loss = tail, df = 0.0, df_known = 0.0;
            for (std::size_t k = 0; k < m; ++k) {
                loss += tt[k] - 2.0 * c[k] * ty[k] + c[k] * c[k] * yy[k];
                df += c[k] * cross[k];
                df_known += c[k] * seq.dim_step(k + 1);
            }
            df /= noise;
            double train = seq.r0;
            for (std::size_t k = 0; k < m; ++k) train += seq.risk_drop(k + 1) * (c[k] * c[k] - 2.0 * c[k]);
            out.loss = std::max(loss, 0.0);
            out.train = train;
            out.df = df;
            out.identity_known = out.loss - (train + 2.0 * noise * df_known - sigma2);
            out.identity_mc = out.loss - (train + 2.0 * noise * df - sigma2);
            if (fitted.weights) {
                bool nonnegative = std::all_of(fitted.alpha.begin(), fitted.alpha.end(), [](double a) { return a >= 0.0; });
                if (nonnegative) out.adaptive = out.loss - adaptive_risk_correction(seq, fitted.alpha);
                out.alpha = fitted.alpha;
            }
            if (estimators[e].kind == EstimatorKind::james_stein) {
                const std::size_t k = estimators[e].k;
                const double dk = seq.dim(k);
                out.js_plugin = noise * (dk - 2.0) * (dk - 2.0) / ((seq.r0 - seq.risk(k)) / noise);
            }
            out.ok = true;
        } catch (const std::exception& ex) {
            out.ok = false;
            out.error = ex.what();
        }
    }

    if (improve_tau) {
        const double tau = *improve_tau;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 1; k <= m; ++k) {
            const double gap = seq.dim(k) - 4.0 * static_cast<double>(k) / (2.0 - tau);
            best = std::min(best, gap * gap / ((seq.r0 - seq.risk(k)) / noise));
        }
        result.improve_plugin = noise * tau * (2.0 - tau) * best;
    }
    return result;
}

namespace {

std::vector<EstimatorSpec> resolve(const Scenario& s, const std::vector<EstimatorSpec>& estimators,
                                   std::optional<OracleStack>* oracle) {
    std::vector<EstimatorSpec> out = estimators;
    for (auto& e : out) {
        validate(e, s);
        if (e.kind == EstimatorKind::oracle_stack && e.alpha.empty()) {
            auto o = oracle_stack(s);
            e.alpha = o.alpha;
            if (oracle) *oracle = std::move(o);
        }
    }
    return out;
}

}  // namespace

std::vector<ReplicationResult> simulate_replications(const Scenario& s, const std::vector<EstimatorSpec>& estimators,
                                                     const ExperimentOptions& options) {
    validate(s);
    const auto resolved = resolve(s, estimators, nullptr);
    std::vector<ReplicationResult> results(options.reps);
    parallel_for(options.reps, options.threads, [&](std::size_t r) {
        results[r] = run_replication(s, resolved, replication_seed(options.seed, r), options.improve_tau);
    });
    return results;
}

// ---------------------------------------------------------------- reports

Summary summarize(const std::vector<double>& values) {
    Summary out;
    out.count = values.size();
    if (values.empty()) {
        out.mean = out.se = out.ci_low = out.ci_high = kNaN;
        return out;
    }
    Neumaier total;
    for (double v : values) total.add(v);
    out.mean = total.value() / static_cast<double>(values.size());
    if (values.size() > 1) {
        Neumaier ss;
        for (double v : values) ss.add((v - out.mean) * (v - out.mean));
        const double var = ss.value() / static_cast<double>(values.size() - 1);
        out.se = std::sqrt(var / static_cast<double>(values.size()));
    }
    out.ci_low = out.mean - kCriticalZ99 * out.se;
    out.ci_high = out.mean + kCriticalZ99 * out.se;
    return out;
}

const EstimatorReport& RiskReport::estimator(const std::string& label) const {
    for (const auto& e : estimators)
        if (e.label == label) return e;
    fail_validation("no estimator labelled '" + label + "' in report");
}

const GapReport& RiskReport::gap(const std::string& first, const std::string& second) const {
    for (const auto& g : gaps)
        if (g.first == first && g.second == second) return g;
    fail_validation("no gap '" + first + "' vs '" + second + "' in report");
}

namespace {

RiskReport run_report(const Scenario& s, const std::vector<EstimatorSpec>& estimators,
                      const ExperimentOptions& options, std::vector<ReplicationResult>& results) {
    validate(s);
    if (options.reps < 2) fail_validation("Monte Carlo needs at least 2 replications");
    if (estimators.empty()) fail_validation("Monte Carlo needs at least one estimator");

    RiskReport report;
    report.scenario = s.name;
    report.seed = options.seed;
    report.reps = options.reps;
    report.threads = options.threads;
    const auto resolved = resolve(s, estimators, &report.oracle);

    results.assign(options.reps, {});
    parallel_for(options.reps, options.threads, [&](std::size_t r) {
        results[r] = run_replication(s, resolved, replication_seed(options.seed, r), options.improve_tau);
    });

    const std::size_t ne = resolved.size();
    for (std::size_t e = 0; e < ne; ++e) {
        const auto& spec = resolved[e];
        EstimatorReport er;
        er.label = spec.label();
        std::vector<double> loss, train, df, idk, idm, adaptive, js;
        for (const auto& rep : results) {
            const auto& o = rep.estimators[e];
            if (!o.ok) {
                if (er.failures++ == 0) er.first_error = o.error;
                continue;
            }
            loss.push_back(o.loss);
            train.push_back(o.train);
            df.push_back(o.df);
            idk.push_back(o.identity_known);
            idm.push_back(o.identity_mc);
            if (o.adaptive) adaptive.push_back(*o.adaptive);
            if (o.js_plugin) js.push_back(*o.js_plugin);
        }
        er.loss = summarize(loss);
        er.train = summarize(train);
        er.df = summarize(df);
        er.identity_known = summarize(idk);
        er.identity_mc = summarize(idm);
        if (!adaptive.empty()) er.adaptive = summarize(adaptive);
        if (!js.empty()) er.js_plugin = summarize(js);
        if (spec.nonadaptive()) {
            std::vector<double> alpha = spec.kind == EstimatorKind::fixed_projection ? unit_weights(s.models(), spec.k)
                                                                                      : spec.alpha;
            double known = 0.0;
            for (std::size_t k = 0; k < alpha.size(); ++k) known += alpha[k] * static_cast<double>(s.d[k]);
            er.known_df = known;
            er.exact_risk = population_risk(s, alpha);
        }
        if (spec.kind == EstimatorKind::james_stein) {
            for (std::size_t f = 0; f < ne; ++f) {
                if (resolved[f].kind != EstimatorKind::fixed_projection || resolved[f].k != spec.k) continue;
                std::vector<double> diff;
                for (const auto& rep : results) {
                    const auto& a = rep.estimators[f];
                    const auto& b = rep.estimators[e];
                    if (a.ok && b.ok && b.js_plugin) diff.push_back(a.loss - b.loss - *b.js_plugin);
                }
                er.js_gap_minus_plugin = summarize(diff);
                break;
            }
        }
        report.estimators.push_back(std::move(er));
    }

    for (std::size_t i = 0; i < ne; ++i) {
        for (std::size_t j = 0; j < ne; ++j) {
            if (i == j) continue;
            std::vector<double> diff;
            for (const auto& rep : results) {
                const auto& a = rep.estimators[i];
                const auto& b = rep.estimators[j];
                if (a.ok && b.ok) diff.push_back(a.loss - b.loss);
            }
            report.gaps.push_back({report.estimators[i].label, report.estimators[j].label, summarize(diff)});
        }
    }

    if (options.improve_tau) {
        std::vector<double> plug;
        for (const auto& rep : results)
            if (rep.improve_plugin) plug.push_back(*rep.improve_plugin);
        report.improve_first_term = summarize(plug);
    }
    return report;
}

}  // namespace

RiskReport monte_carlo(const Scenario& s, const std::vector<EstimatorSpec>& estimators,
                       const ExperimentOptions& options) {
    std::vector<ReplicationResult> results;
    return run_report(s, estimators, options, results);
}

bool dimension_condition_holds(const std::vector<long>& d, double tau) {
    if (!(tau > 0.0 && tau < 2.0)) return false;
    const double need = 4.0 / (2.0 - tau);
    long prev = 0;
    for (long dk : d) {
        if (static_cast<double>(dk - prev) < need) return false;
        prev = dk;
    }
    return true;
}

RiskReport risk_gap_experiment(const Scenario& s, double tau, double lambda, const ExperimentOptions& options,
                               std::vector<EstimatorSpec> extra) {
    EstimatorSpec best;
    best.kind = EstimatorKind::best;
    best.lambda = lambda;
    EstimatorSpec stack;
    stack.kind = EstimatorKind::stack;
    stack.tau = tau;
    stack.lambda = lambda;
    std::vector<EstimatorSpec> specs{best, stack};
    specs.insert(specs.end(), extra.begin(), extra.end());

    ExperimentOptions opts = options;
    opts.improve_tau = tau;
    if (!(tau > 0.0 && tau < 2.0)) fail_validation("risk gap experiment needs 0 < tau < 2");

    std::vector<ReplicationResult> results;
    RiskReport report = run_report(s, specs, opts, results);
    std::vector<double> diff;
    for (const auto& rep : results) {
        const auto& a = rep.estimators[0];
        const auto& b = rep.estimators[1];
        if (a.ok && b.ok && rep.improve_plugin) diff.push_back(a.loss - b.loss - *rep.improve_plugin);
    }
    report.gap_minus_plugin = summarize(diff);

    if (!dimension_condition_holds(s.d, tau)) {
        report.warnings.push_back("dimension condition d_k - d_{k-1} >= 4/(2 - tau) fails for tau = " + num(tau) +
                                  "; positivity of the gap is not guaranteed");
    }
    return report;
}

DfEstimate estimate_df(const Scenario& s, const EstimatorSpec& estimator, const ExperimentOptions& options) {
    if (options.reps < 1000) fail_validation("df estimation needs at least 1000 replications");
    const auto report = monte_carlo(s, {estimator}, options);
    const auto& e = report.estimators.front();
    return {e.label, e.df, e.identity_known, e.identity_mc, e.known_df};
}

BreimanStats breiman_stats(const Scenario& s, const ExperimentOptions& options, double tau, double lambda) {
    validate(s);
    if (options.reps < 1) fail_validation("breiman_stats needs at least one replication");
    struct Row {
        bool ok = false;
        double l0[2], sum[2], dim[2], best2 = 0.0, best_lambda = 0.0;
    };
    std::vector<Row> rows(options.reps);
    parallel_for(options.reps, options.threads, [&](std::size_t r) {
        const auto draw = draw_replication(s, replication_seed(options.seed, r));
        Row row;
        try {
            const auto pen = stack_weights(draw.seq, tau, lambda);
            const auto l0 = l0_stack_weights(draw.seq);
            const StackWeights* w[2] = {&pen, &l0};
            for (int i = 0; i < 2; ++i) {
                row.l0[i] = static_cast<double>(w[i]->l0);
                row.sum[i] = w[i]->sum;
                row.dim[i] = static_cast<double>(w[i]->dim);
            }
            row.best2 = draw.seq.dim(best_single(draw.seq, 2.0).m_hat);
            row.best_lambda = draw.seq.dim(best_single(draw.seq, lambda).m_hat);
            row.ok = true;
        } catch (const Error&) {
        }
        rows[r] = row;
    });

    BreimanStats out;
    out.reps = options.reps;
    const std::string labels[2] = {"stack(tau=" + num(tau) + ",lambda=" + num(lambda) + ")", "l0stack"};
    for (int i = 0; i < 2; ++i) {
        BreimanStats::Entry entry;
        entry.label = labels[i];
        std::vector<double> l0, sum, dim, best;
        for (const auto& row : rows) {
            if (!row.ok) continue;
            l0.push_back(row.l0[i]);
            sum.push_back(row.sum[i]);
            dim.push_back(row.dim[i]);
            best.push_back(i == 0 ? row.best_lambda : row.best2);
            if (!(row.sum[i] < 1.0)) ++entry.sum_violations;
            if (row.l0[i] > static_cast<double>(s.models())) ++entry.l0_violations;
            const bool null_fit = row.l0[i] == 0.0;
            if (null_fit) ++entry.null_solutions;
            if (i == 0 && row.dim[i] > row.best_lambda) ++entry.dim_violations;
            if (i == 1 && !null_fit && row.dim[i] < row.best2) ++entry.dim_violations;
        }
        entry.l0 = summarize(l0);
        entry.sum = summarize(sum);
        entry.dim_stack = summarize(dim);
        entry.dim_best = summarize(best);
        out.entries.push_back(std::move(entry));
    }
    return out;
}

}  // namespace nestack
