#include <doctest.h>

#include <cmath>
#include <random>

#include "nestack/error.hpp"
#include "nestack/isotonic.hpp"
#include "oracles.hpp"

using namespace nestack;

namespace {

IsotonicProblem random_problem(std::mt19937_64& rng, std::size_t max_m) {
    std::uniform_int_distribution<std::size_t> pick(1, max_m);
    std::normal_distribution<double> g;
    std::lognormal_distribution<double> wd(0.0, 1.0);
    IsotonicProblem p;
    const std::size_t m = pick(rng);
    for (std::size_t k = 0; k < m; ++k) {
        p.z.push_back(g(rng) + 0.2 * static_cast<double>(k));
        p.w.push_back(wd(rng));
    }
    return p;
}

bool close(double a, double b, double tol) { return std::abs(a - b) <= tol * std::max(1.0, std::abs(b)); }

}  // namespace

TEST_CASE("pava on a textbook example") {
    const std::vector<double> z{1.0, 3.0, 2.0, 4.0, 3.5, 5.0};
    const std::vector<double> w(6, 1.0);
    const auto fit = pava(z, w);
    const std::vector<double> expected{1.0, 2.5, 2.5, 3.75, 3.75, 5.0};
    for (std::size_t k = 0; k < 6; ++k) CHECK(fit.beta[k] == doctest::Approx(expected[k]));
    CHECK(fit.blocks.size() == 4);
    CHECK(fit.objective == doctest::Approx(0.5 + 0.125));
}

TEST_CASE("pava matches the max-min oracle and a pooling oracle") {
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 500; ++rep) {
        const auto p = random_problem(rng, 12);
        const auto fast = pava(p);
        const auto slow = minimax_oracle(p);
        const auto pooled = oracle::isotonic_pool(p.z, p.w);
        for (std::size_t k = 0; k < p.size(); ++k) {
            CHECK(close(fast.beta[k], slow.beta[k], 1e-10));
            CHECK(close(fast.beta[k], pooled[k], 1e-10));
        }
        CHECK(std::is_sorted(fast.beta.begin(), fast.beta.end()));
    }
}

TEST_CASE("bounded fit is the clipped unbounded fit") {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> g;
    for (int rep = 0; rep < 300; ++rep) {
        auto p = random_problem(rng, 10);
        double a = g(rng), b = g(rng) + 1.0;
        if (a > b) std::swap(a, b);
        p.lower = a;
        p.upper = b;
        const auto clipped = clip_fit(pava(p), p, a, b);
        const auto bounded = oracle::bounded_isotonic(p.z, p.w, a, b);
        const auto slow = minimax_oracle(p);
        for (std::size_t k = 0; k < p.size(); ++k) {
            CHECK(close(clipped.beta[k], bounded[k], 1e-8));
            CHECK(close(clipped.beta[k], slow.beta[k], 1e-10));
        }
    }
}

TEST_CASE("reduced isotonic equals exhaustive segmentation") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int rep = 0; rep < 150; ++rep) {
        auto p = random_problem(rng, 9);
        for (auto& z : p.z) z = 0.6 * z + 0.5;
        p.upper = 1.0;
        p.jump_penalty = 0.5 * unit(rng);
        p.value_weighted_penalty = rep % 3 == 0;
        const auto fit = reduced_isotonic(p);
        const auto best = oracle::reduced_exhaustive(p.z, p.w, p.jump_penalty, 1.0, p.value_weighted_penalty);
        const double got = oracle::reduced_objective(p.z, p.w, fit.beta, p.jump_penalty, 1.0,
                                                     p.value_weighted_penalty);
        CHECK(got == doctest::Approx(best.objective).epsilon(1e-10));
        CHECK(fit.objective == doctest::Approx(got).epsilon(1e-10));
        CHECK(std::is_sorted(fit.beta.begin(), fit.beta.end()));
        for (double b : fit.beta) CHECK(b <= 1.0);
    }
}

TEST_CASE("zero jump penalty reduces to clipped pava") {
    std::mt19937_64 rng(14);
    for (int rep = 0; rep < 100; ++rep) {
        auto p = random_problem(rng, 8);
        p.upper = 0.5;
        const auto fit = reduced_isotonic(p);
        const auto clipped = clip_fit(pava(p), p, -1e300, 0.5);
        CHECK(fit.objective == doctest::Approx(clipped.objective).epsilon(1e-10));
    }
}

TEST_CASE("large jump penalty forces a single level at the bound") {
    IsotonicProblem p;
    p.z = {0.1, 0.2, 0.3};
    p.w = {1.0, 1.0, 1.0};
    p.upper = 1.0;
    p.jump_penalty = 100.0;
    const auto fit = reduced_isotonic(p);
    for (double b : fit.beta) CHECK(b == 1.0);
}

TEST_CASE("invalid problems are rejected") {
    IsotonicProblem p;
    CHECK_THROWS_AS(pava(p), Error);
    p.z = {1.0, 2.0};
    p.w = {1.0, 0.0};
    CHECK_THROWS_AS(pava(p), Error);
    p.w = {1.0, 1.0};
    CHECK_THROWS_AS(reduced_isotonic(p), Error);
    p.lower = 2.0;
    p.upper = 1.0;
    CHECK_THROWS_AS(minimax_oracle(p), Error);
    IsotonicProblem big;
    big.z.assign(70, 0.0);
    big.w.assign(70, 1.0);
    CHECK_THROWS_AS(minimax_oracle(big), Error);
}

TEST_CASE("blocks group nearly equal values") {
    const std::vector<double> beta{0.0, 1.0, 1.0 + 1e-15, 2.0};
    const auto blocks = make_blocks(beta);
    REQUIRE(blocks.size() == 3);
    CHECK(blocks[1].start == 1);
    CHECK(blocks[1].end == 2);
    CHECK(nearly_equal(1.0, 1.0 + 1e-14));
    CHECK_FALSE(nearly_equal(1.0, 1.0 + 1e-9));
}
