// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>

#include "nestack/isotonic.hpp"
#include "nestack/nested_models.hpp"
#include "nestack/simulation.hpp"
#include "nestack/stacking.hpp"
#include "oracles.hpp"

using namespace nestack;

namespace {

struct Verdict {
    bool pass = true;
    std::ostringstream note;

    void require(bool ok, const std::string& what) {
        if (!ok && pass) note << "first failure: " << what << "; ";
        pass = pass && ok;
    }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::size_t threads() { return std::max(1U, std::thread::hardware_concurrency()); }

bool rel_close(double a, double b, double tol) { return std::abs(a - b) <= tol * std::max(1.0, std::abs(b)); }

Scenario default_preset() {
    ScenarioConfig c;
    c.preset = "theorem1-default";
    return make_scenario(c);
}

EstimatorSpec spec(EstimatorKind kind) {
    EstimatorSpec s;
    s.kind = kind;
    return s;
}

Eigen::VectorXd as_vector(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void criterion1(Verdict& v) {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<std::size_t> pick(1, 12);
    std::normal_distribution<double> g;
    std::lognormal_distribution<double> wd(0.0, 1.0);
    double worst = 0.0;
    for (int rep = 0; rep < 1000; ++rep) {
        IsotonicProblem p;
        const std::size_t m = pick(rng);
        for (std::size_t k = 0; k < m; ++k) {
            p.z.push_back(g(rng) + 0.15 * static_cast<double>(k));
            p.w.push_back(wd(rng));
        }
        const auto fast = pava(p);
        const auto slow = minimax_oracle(p);
        for (std::size_t k = 0; k < m; ++k) {
            v.require(rel_close(fast.beta[k], slow.beta[k], 1e-10), "pava vs oracle");
            worst = std::max(worst, std::abs(fast.beta[k] - slow.beta[k]));
        }
        double a = g(rng), b = g(rng);
        if (a > b) std::swap(a, b);
        p.lower = a;
        p.upper = b;
        const auto clipped = clip_fit(fast, p, a, b);
        const auto bounded = oracle::bounded_isotonic(p.z, p.w, a, b);
        const auto bounded_minimax = minimax_oracle(p);
        for (std::size_t k = 0; k < m; ++k) {
            v.require(rel_close(clipped.beta[k], bounded[k], 1e-8), "clip vs bounded fit");
            v.require(rel_close(clipped.beta[k], bounded_minimax.beta[k], 1e-10), "clip vs bounded oracle");
        }
    }
    const double secs = seconds_since(t0);
    v.require(secs < 10.0, "runtime");
    v.note << "1000 problems, max |pava - oracle| = " << worst << ", " << secs << " s";
}

void criterion2(Verdict& v) {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(102);
    std::uniform_real_distribution<double> unit(0.05, 2.5);
    double worst = -1e300;
    for (int rep = 0; rep < 200; ++rep) {
        const auto seq = oracle::random_sequence(rng, 6);
        const double tau = unit(rng), lambda = unit(rng);
        const auto w = stack_weights(seq, tau, lambda);
        const auto brute = oracle::lasso_support_enumeration(seq, tau, lambda);
        const double gap = oracle::lasso_objective(seq, as_vector(w.alpha), tau, lambda) - brute.objective;
        worst = std::max(worst, gap);
        v.require(gap <= 1e-8, "objective gap");
    }
    const double secs = seconds_since(t0);
    v.require(secs < 60.0, "runtime");
    v.note << "200 instances, max objective gap = " << worst << ", " << secs << " s";
}

void criterion3(Verdict& v) {
    std::mt19937_64 rng(103);
    std::size_t mismatches = 0;
    for (int rep = 0; rep < 10000; ++rep) {
        const auto seq = oracle::random_sequence(rng, 15);
        const auto g = gamma_sequence(seq);
        for (double lambda : {0.5, 1.0, 2.0, std::log(static_cast<double>(seq.n))})
            if (best_single(seq, lambda).m_hat != selected_by_gamma(g, lambda)) ++mismatches;
    }
    v.require(mismatches == 0, "selection mismatch");
    v.note << "40000 comparisons, " << mismatches << " mismatches";
}

void criterion4(Verdict& v) {
    std::mt19937_64 rng(104);
    std::uniform_real_distribution<double> unit(0.05, 3.0);
    double max_sum = 0.0;
    for (int rep = 0; rep < 10000; ++rep) {
        const auto seq = oracle::random_sequence(rng, 15);
        const double tau = unit(rng), lambda = unit(rng);
        const auto w = stack_weights(seq, tau, lambda);
        const double g1 = w.gamma[0];
        const double law = g1 < std::min(1.0 / tau, 1.0 / lambda) ? 1.0 - tau * g1 : 0.0;
        v.require(rel_close(w.sum, law, 1e-12), "sum law");
        v.require(w.sum < 1.0, "sum < 1");
        max_sum = std::max(max_sum, w.sum);
    }
    v.note << "10000 instances, max sum = " << max_sum;
}

void criterion5(Verdict& v) {
    std::mt19937_64 rng(105);
    std::normal_distribution<double> g;
    std::uniform_int_distribution<int> pick_p(1, 8);
    std::uniform_real_distribution<double> unit(-0.5, 1.5);
    double worst = 0.0;
    for (int rep = 0; rep < 1000; ++rep) {
        const int p = pick_p(rng);
        const int n = p + 2 + pick_p(rng) * 3;
        Eigen::MatrixXd x(n, p);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < p; ++j) x(i, j) = g(rng);
        Eigen::VectorXd y(n);
        for (int i = 0; i < n; ++i) y(i) = g(rng) + x(i, 0);
        std::vector<long> dims;
        for (long k = 1; k <= p; ++k)
            if (k == p || g(rng) > 0.0) dims.push_back(k);
        const auto basis = orthonormalize(DesignMatrix{x});
        const std::vector<double> yv(y.data(), y.data() + n);
        const auto seq = fit_nested(basis, yv, prefix_sets(dims), 1.0);
        std::vector<double> alpha(dims.size());
        for (auto& a : alpha) a = unit(rng);
        // residual of Σ α_k (least-squares fit on the first d_k design columns)
        Eigen::VectorXd fit = Eigen::VectorXd::Zero(n);
        for (std::size_t k = 0; k < dims.size(); ++k) {
            const Eigen::MatrixXd sub = x.leftCols(dims[k]);
            fit += alpha[k] * (sub * sub.colPivHouseholderQr().solve(y));
        }
        const double direct = (y - fit).squaredNorm() / n;
        const double closed = combination_risk(seq, alpha);
        const double rel = std::abs(closed - direct) / std::max(std::abs(direct), 1e-300);
        worst = std::max(worst, rel);
        v.require(rel <= 1e-10, "risk identity");
    }
    v.note << "1000 fits, max relative error = " << worst;
}

void criterion6(Verdict& v) {
    const auto t0 = Clock::now();
    ExperimentOptions opt;
    opt.reps = 100000;
    opt.seed = 20240601;
    opt.threads = threads();
    const auto r = risk_gap_experiment(default_preset(), 0.5, 2.0, opt);
    const auto& gap = r.gap("best(lambda=2)", "stack(tau=0.5,lambda=2)").gap;
    const auto& diff = *r.gap_minus_plugin;
    v.require(r.warnings.empty(), "dimension condition");
    v.require(gap.ci_low > 0.0, "99% CI excludes 0");
    v.require(diff.mean >= -4.0 * diff.se, "gap >= plug-in - 4 se");
    v.note << "gap = " << gap.mean << " (99% CI " << gap.ci_low << ", " << gap.ci_high
           << "), plug-in = " << r.improve_first_term->mean << ", gap - plug-in = " << diff.mean << " +- "
           << diff.se << ", " << seconds_since(t0) << " s";
}

RiskReport calibration_run() {
    const auto s = default_preset();
    std::vector<EstimatorSpec> specs;
    for (std::size_t k = 1; k <= s.models(); ++k) {
        auto p = spec(EstimatorKind::fixed_projection);
        p.k = k;
        specs.push_back(p);
    }
    auto fw = spec(EstimatorKind::fixed_weights);
    fw.alpha.assign(s.models(), 0.0);
    fw.alpha[1] = 0.3;
    fw.alpha[4] = 0.5;
    specs.push_back(fw);
    specs.push_back(spec(EstimatorKind::oracle_stack));
    auto st = spec(EstimatorKind::stack);
    st.tau = 1.0;
    st.lambda = 1.0;
    specs.push_back(st);
    auto js = spec(EstimatorKind::james_stein);
    js.k = 3;
    specs.push_back(js);
    ExperimentOptions opt;
    opt.reps = 100000;
    opt.seed = 777;
    opt.threads = threads();
    return monte_carlo(s, specs, opt);
}

void criterion7(Verdict& v, const RiskReport& r) {
    double worst_z = 0.0;
    for (const auto& e : r.estimators) {
        if (!e.known_df) continue;
        const double zdf = std::abs(e.df.mean - *e.known_df) / e.df.se;
        if (e.label.rfind("fixed_projection", 0) == 0) {
            v.require(zdf <= 4.0, e.label + " df");
            worst_z = std::max(worst_z, zdf);
        }
        const double zid = e.identity_known.se > 0.0 ? std::abs(e.identity_known.mean) / e.identity_known.se : 0.0;
        v.require(zid <= 4.0, e.label + " risk identity");
        worst_z = std::max(worst_z, zid);
    }
    const auto& st = r.estimator("stack(tau=1,lambda=1)");
    const double za = std::abs(st.adaptive->mean) / st.adaptive->se;
    v.require(za <= 4.0, "adaptive correction");
    v.note << "max |z| over df and identity checks = " << worst_z << ", adaptive residual = " << st.adaptive->mean
           << " +- " << st.adaptive->se;
}

void criterion8(Verdict& v, const RiskReport& r) {
    const auto& js = r.estimator("james_stein(k=3)");
    const auto& d = *js.js_gap_minus_plugin;
    v.require(std::abs(d.mean) <= 4.0 * d.se, "JS gap vs plug-in");
    v.note << "gap - plug-in = " << d.mean << " +- " << d.se << ", plug-in mean = " << js.js_plugin->mean;
}

void criterion9(Verdict& v) {
    std::mt19937_64 rng(109);
    for (int rep = 0; rep < 200; ++rep) {
        const auto seq = oracle::random_sequence(rng, 10);
        std::vector<double> z, w;
        for (std::size_t k = 1; k <= seq.models(); ++k) {
            w.push_back(seq.risk_drop(k));
            z.push_back(seq.noise_scale() * seq.dim_step(k) / seq.risk_drop(k));
        }
        const double xi = 4.0 * seq.noise_scale();
        IsotonicProblem p{z, w, std::nullopt, 1.0, xi, false};
        const auto fit = reduced_isotonic(p);
        const auto best = oracle::reduced_exhaustive(z, w, xi, 1.0);
        const double got = oracle::reduced_objective(z, w, fit.beta, xi, 1.0, false);
        v.require(rel_close(got, best.objective, 1e-10), "reduced isotonic vs exhaustive");
    }
    std::size_t nulls = 0, checked = 0;
    for (int rep = 0; rep < 10000; ++rep) {
        const auto seq = oracle::random_sequence(rng, 15);
        const auto w = l0_stack_weights(seq);
        v.require(w.sum < 1.0, "sum < 1");
        if (w.l0 == 0) {
            ++nulls;
            continue;
        }
        ++checked;
        v.require(static_cast<double>(w.dim) >= seq.dim(best_single(seq, 2.0).m_hat), "dim(stack) >= dim(best)");
    }
    v.note << "200 segmentations exact; dimension bound on " << checked << " fits, " << nulls
           << " null solutions skipped";
}

void criterion10(Verdict& v) {
    std::mt19937_64 rng(110);
    std::uniform_real_distribution<double> unit(0.05, 0.95);
    double worst_dist = 0.0;
    int instances = 0;
    for (int rep = 0; rep < 40; ++rep) {
        const auto seq = oracle::random_sequence(rng, 4);
        const double eta = unit(rng);
        const auto w = qagg_weights(seq, eta);
        v.require(std::abs(w.sum - 1.0) <= 1e-10, "simplex sum");
        for (double a : w.alpha) v.require(a >= -1e-10, "simplex sign");
        const auto grid = oracle::qagg_grid(seq, eta, 100);
        const double f = oracle::qagg_objective(seq, as_vector(w.alpha), eta);
        v.require(f <= grid.objective + 1e-10 * std::max(1.0, std::abs(grid.objective)), "not above grid minimum");
        // f(α) - f* >= (1-η) λ_min(G) ‖α - α*‖² on the simplex
        const double lmin = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(oracle::gram(seq)).eigenvalues()(0);
        const double dist = (grid.alpha - as_vector(w.alpha)).norm();
        const double bound = std::sqrt(std::max(grid.objective - f, 0.0) / ((1.0 - eta) * lmin));
        v.require(dist <= bound + 1e-9, "grid minimizer distance");
        worst_dist = std::max(worst_dist, dist);
        ++instances;
    }
    v.note << instances << " instances on a 0.01 simplex grid, max |alpha_grid - alpha| = " << worst_dist;
}

void criterion11(Verdict& v) {
    NestedModelSequence fix;
    fix.sigma2 = 1.0;
    fix.n = 1;
    fix.d = {1, 2, 3};
    fix.r0 = 10.0;
    fix.r = {9.0, 5.0, 4.5};
    const auto e = randomized_ensemble(fix, 2, std::nullopt, 2.0, 0);
    const std::array<double, 3> expected{1.0 / 3.0, 1.0 / 3.0, 0.0};
    for (std::size_t k = 0; k < 3; ++k) v.require(rel_close(e.inclusion[k], expected[k], 1e-15), "fixture");

    std::mt19937_64 rng(111);
    double worst_z = 0.0;
    for (int rep = 0; rep < 5; ++rep) {
        NestedModelSequence seq;
        do seq = oracle::random_sequence(rng, 10);
        while (seq.models() < 4);
        const std::size_t m = 2 + rep % (seq.models() - 1);
        const auto exact = randomized_ensemble(seq, m, std::nullopt, 2.0, 0);
        const auto sampled = randomized_ensemble(seq, m, 100000, 2.0, 1000 + static_cast<std::uint64_t>(rep));
        for (std::size_t k = 0; k < seq.models(); ++k) {
            const double p = exact.inclusion[k];
            const double se = std::sqrt(p * (1.0 - p) / 100000.0);
            const double diff = std::abs(sampled.inclusion[k] - p);
            if (se == 0.0) {
                v.require(diff == 0.0, "degenerate inclusion");
            } else {
                v.require(diff <= 3.0 * se, "sampling within 3 se");
                worst_z = std::max(worst_z, diff / se);
            }
        }
    }
    for (int rep = 0; rep < 2000; ++rep) {
        const auto seq = oracle::random_sequence(rng, 12);
        const auto full = randomized_ensemble(seq, seq.models() + 1, std::nullopt, 2.0, 0);
        const auto m_hat = best_single(seq, 2.0).m_hat;
        for (std::size_t k = 1; k <= seq.models(); ++k)
            v.require(full.inclusion[k - 1] == (k <= m_hat ? 1.0 : 0.0), "m = M+1 indicators");
    }
    v.note << "fixture exact; sampled vs exact max |z| = " << worst_z << "; m = M+1 exact on 2000 instances";
}

std::string capture(const std::string& args) {
    const std::string cmd = std::string(NESTACK_BINARY) + " " + args + " 2>/dev/null";
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return {};
    std::string out;
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) out.append(buf.data(), n);
    if (pclose(p) != 0) return {};
    return out;
}

void criterion12(Verdict& v) {
    const std::string fx = NESTACK_FIXTURES;
    const std::vector<std::string> invocations{
        "weights --input " + fx + "/small_sequence.json --method qagg",
        "ensemble --input " + fx + "/small_sequence.json --m 3 --B 5000 --seed 11",
        "fit --design " + fx + "/design.csv --sigma2 0.25 --nested-from stepwise --method l0",
        "simulate --config " + fx + "/sim.json --seed 5 --reps 2000",
        "simulate --config " + fx + "/sim.json --seed 5 --reps 2000 --format csv",
        "riskgap --config " + fx + "/sim.json --seed 6 --reps 2000",
        "df --config " + fx + "/sim.json --seed 7 --reps 2000",
    };
    std::size_t compared = 0;
    for (const auto& base : invocations) {
        const bool parallel = base.rfind("simulate", 0) == 0 || base.rfind("riskgap", 0) == 0 ||
                              base.rfind("df", 0) == 0;
        const auto first = capture(parallel ? base + " --threads 1" : base);
        v.require(!first.empty(), "command ran: " + base);
        for (const char* t : {" --threads 1", " --threads 2", " --threads 8"}) {
            if (!parallel && std::string(t) != " --threads 1") continue;
            v.require(capture(parallel ? base + t : base) == first, "byte-identical: " + base + t);
            ++compared;
        }
    }
    v.note << compared << " repeated invocations compared byte for byte";
}

}  // namespace

int main() {
    int failed = 0;
    auto report = [&](int id, const std::string& title, const std::function<void(Verdict&)>& body) {
        Verdict v;
        try {
            body(v);
        } catch (const std::exception& e) {
            v.require(false, std::string("exception: ") + e.what());
        }
        if (!v.pass) ++failed;
        std::cout << (v.pass ? "[PASS]" : "[FAIL]") << " criterion " << id << ": " << title << " | "
                  << v.note.str() << std::endl;
    };

    report(1, "PAVA equals the max-min oracle; bounded fit is the clipped fit", criterion1);
    report(2, "closed-form stack weights solve the penalized program", criterion2);
    report(3, "best single model equals the gamma threshold count", criterion3);
    report(4, "weight-sum law and sum below one", criterion4);
    report(5, "telescoping risk equals direct residuals", criterion5);
    report(6, "stack beats best single on the default preset", criterion6);
    std::optional<RiskReport> calib;
    std::string calib_error;
    try {
        calib = calibration_run();
    } catch (const std::exception& e) {
        calib_error = e.what();
    }
    auto with_calib = [&](void (*check)(Verdict&, const RiskReport&)) {
        return [&, check](Verdict& v) {
            if (calib)
                check(v, *calib);
            else
                v.require(false, "calibration run failed: " + calib_error);
        };
    };
    report(7, "df and risk-identity calibration", with_calib(criterion7));
    report(8, "James-Stein gap matches its plug-in", with_calib(criterion8));
    report(9, "l0 stacking: exact segmentation and dimension bound", criterion9);
    report(10, "Q-aggregation on the simplex matches grid search", criterion10);
    report(11, "randomized ensemble: fixture, sampling and m = M+1", criterion11);
    report(12, "CLI output is byte-identical across runs and thread counts", criterion12);

    std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
    return failed == 0 ? 0 : 1;
}
