#include "nestack/isotonic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "nestack/error.hpp"

namespace nestack {

namespace {

void check_vectors(std::span<const double> z, std::span<const double> w) {
    if (z.empty()) fail_validation("isotonic problem needs M >= 1");
    if (z.size() != w.size()) fail_validation("z and w must have the same length");
    for (std::size_t k = 0; k < z.size(); ++k) {
        if (!std::isfinite(z[k])) fail_validation("isotonic targets must be finite");
        if (!(w[k] > 0.0) || !std::isfinite(w[k]))
            fail_validation("isotonic weights must be finite and positive (index " + std::to_string(k) + ")");
    }
}

double squared_error(std::span<const double> z, std::span<const double> w, std::span<const double> beta) {
    double s = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) {
        const double r = z[k] - beta[k];
        s += w[k] * r * r;
    }
    return s;
}

IsotonicFit finish(std::vector<double> beta, const IsotonicProblem& problem) {
    IsotonicFit fit;
    fit.blocks = make_blocks(beta);
    fit.objective = isotonic_objective(problem, beta);
    fit.beta = std::move(beta);
    return fit;
}

struct Pool {
    double sw;
    double swz;
    std::size_t start;
    std::size_t end;
    double value() const { return swz / sw; }
};

std::vector<Pool> pool_adjacent(std::span<const double> z, std::span<const double> w) {
    std::vector<Pool> stack;
    stack.reserve(z.size());
    for (std::size_t k = 0; k < z.size(); ++k) {
        stack.push_back({w[k], w[k] * z[k], k, k});
        while (stack.size() > 1 && stack[stack.size() - 2].value() >= stack.back().value()) {
            Pool top = stack.back();
            stack.pop_back();
            auto& prev = stack.back();
            prev.sw += top.sw;
            prev.swz += top.swz;
            prev.end = top.end;
        }
    }
    return stack;
}

struct Cell {
    double cost = std::numeric_limits<double>::infinity();
    std::size_t segments = 0;
    std::size_t prev = 0;  // start block of the last segment
    bool tail = false;
};

// Lexicographic preference: lower cost, then fewer segments; ties after that
// go to the later candidate since callers scan boundaries in increasing order.
bool better_or_tied(double cost, std::size_t segments, const Cell& current) {
    if (!std::isfinite(current.cost)) return true;
    const double scale = std::max({std::abs(cost), std::abs(current.cost), 1e-300});
    if (std::abs(cost - current.cost) <= kMergeTolerance * scale) return segments <= current.segments;
    return cost < current.cost;
}

}  // namespace

bool nearly_equal(double a, double b) {
    if (a == b) return true;
    return std::abs(a - b) <= kMergeTolerance * std::max(std::abs(a), std::abs(b));
}

void validate(const IsotonicProblem& problem) {
    check_vectors(problem.z, problem.w);
    if (problem.lower && !std::isfinite(*problem.lower)) fail_validation("lower bound must be finite");
    if (problem.upper && !std::isfinite(*problem.upper)) fail_validation("upper bound must be finite");
    if (problem.lower && problem.upper && *problem.lower > *problem.upper)
        fail_validation("isotonic bounds need a <= b");
    if (!(problem.jump_penalty >= 0.0) || !std::isfinite(problem.jump_penalty))
        fail_validation("jump penalty must be finite and nonnegative");
}

std::vector<IsotonicBlock> make_blocks(std::span<const double> beta) {
    std::vector<IsotonicBlock> blocks;
    for (std::size_t k = 0; k < beta.size(); ++k) {
        if (!blocks.empty() && nearly_equal(blocks.back().value, beta[k])) {
            blocks.back().end = k;
        } else {
            blocks.push_back({k, k, beta[k]});
        }
    }
    return blocks;
}

double isotonic_objective(const IsotonicProblem& problem, std::span<const double> beta) {
    double obj = squared_error(problem.z, problem.w, beta);
    if (problem.jump_penalty == 0.0) return obj;
    const std::size_t m = beta.size();
    for (std::size_t k = 0; k < m; ++k) {
        double next;
        if (k + 1 < m) {
            next = beta[k + 1];
        } else if (problem.upper) {
            next = *problem.upper;
        } else {
            break;
        }
        if (!nearly_equal(beta[k], next))
            obj += problem.jump_penalty * (problem.value_weighted_penalty ? beta[k] : 1.0);
    }
    return obj;
}

IsotonicFit pava(std::span<const double> z, std::span<const double> w) {
    IsotonicProblem problem;
    problem.z.assign(z.begin(), z.end());
    problem.w.assign(w.begin(), w.end());
    return pava(problem);
}

IsotonicFit pava(const IsotonicProblem& problem) {
    check_vectors(problem.z, problem.w);
    const auto pools = pool_adjacent(problem.z, problem.w);
    IsotonicFit fit;
    fit.beta.resize(problem.size());
    for (const auto& p : pools) {
        const double v = p.value();
        for (std::size_t k = p.start; k <= p.end; ++k) fit.beta[k] = v;
        fit.blocks.push_back({p.start, p.end, v});
    }
    fit.objective = squared_error(problem.z, problem.w, fit.beta);
    return fit;
}

IsotonicFit minimax_oracle(const IsotonicProblem& problem, std::size_t cap) {
    validate(problem);
    const std::size_t m = problem.size();
    if (m > cap) fail_validation("minimax oracle limited to M <= " + std::to_string(cap));
    const auto& z = problem.z;
    const auto& w = problem.w;
    std::vector<double> beta(m);
    for (std::size_t k = 0; k < m; ++k) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i <= k; ++i) {
            double sw = 0.0, swz = 0.0;
            for (std::size_t l = i; l < k; ++l) {
                sw += w[l];
                swz += w[l] * z[l];
            }
            double inner = std::numeric_limits<double>::infinity();
            for (std::size_t j = k; j < m; ++j) {
                sw += w[j];
                swz += w[j] * z[j];
                inner = std::min(inner, swz / sw);
            }
            best = std::max(best, inner);
        }
        if (problem.lower) best = std::max(best, *problem.lower);
        if (problem.upper) best = std::min(best, *problem.upper);
        beta[k] = best;
    }
    IsotonicProblem plain = problem;
    plain.jump_penalty = 0.0;
    return finish(std::move(beta), plain);
}

IsotonicFit clip_fit(const IsotonicFit& fit, const IsotonicProblem& problem, double a, double b) {
    if (a > b) fail_validation("clip bounds need a <= b");
    if (fit.beta.size() != problem.size()) fail_validation("fit and problem sizes differ");
    std::vector<double> beta(fit.beta.size());
    std::transform(fit.beta.begin(), fit.beta.end(), beta.begin(),
                   [&](double v) { return std::clamp(v, a, b); });
    IsotonicProblem plain = problem;
    plain.jump_penalty = 0.0;
    return finish(std::move(beta), plain);
}

IsotonicFit reduced_isotonic(const IsotonicProblem& problem) {
    validate(problem);
    if (!problem.upper) fail_validation("reduced isotonic regression needs an upper bound b");
    const double b = *problem.upper;
    const double a = problem.lower.value_or(-std::numeric_limits<double>::infinity());
    const double xi = problem.jump_penalty;
    const auto& z = problem.z;
    const auto& w = problem.w;

    const auto pools = pool_adjacent(z, w);
    const std::size_t nb = pools.size();

    // Squared error of holding value v over pools p..q-1, via moments.
    std::vector<double> sw(nb + 1, 0.0), swz(nb + 1, 0.0), swzz(nb + 1, 0.0);
    for (std::size_t p = 0; p < nb; ++p) {
        double zz = 0.0;
        for (std::size_t k = pools[p].start; k <= pools[p].end; ++k) zz += w[k] * z[k] * z[k];
        sw[p + 1] = sw[p] + pools[p].sw;
        swz[p + 1] = swz[p] + pools[p].swz;
        swzz[p + 1] = swzz[p] + zz;
    }
    auto segment_sse = [&](std::size_t p, std::size_t q, double v) {
        const double W = sw[q] - sw[p], S = swz[q] - swz[p], Q = swzz[q] - swzz[p];
        return std::max(0.0, Q - 2.0 * v * S + v * v * W);
    };
    auto free_value = [&](std::size_t p, std::size_t q) {
        return std::clamp((swz[q] - swz[p]) / (sw[q] - sw[p]), a, b);
    };
    auto jump_cost = [&](double v) {
        if (v == b) return 0.0;
        return problem.value_weighted_penalty ? xi * v : xi;
    };

    // f[q]: best cover of pools 0..q-1 by free segments.
    std::vector<Cell> f(nb + 1);
    f[0].cost = 0.0;
    for (std::size_t q = 1; q <= nb; ++q) {
        for (std::size_t p = 0; p < q; ++p) {
            if (!std::isfinite(f[p].cost)) continue;
            const double v = free_value(p, q);
            const double cost = f[p].cost + segment_sse(p, q, v) + jump_cost(v);
            const std::size_t segs = f[p].segments + 1;
            if (better_or_tied(cost, segs, f[q])) f[q] = {cost, segs, p, false};
        }
    }
    Cell best = f[nb];
    for (std::size_t p = 0; p < nb; ++p) {
        const double cost = f[p].cost + segment_sse(p, nb, b);
        const std::size_t segs = f[p].segments + 1;
        if (better_or_tied(cost, segs, best)) best = {cost, segs, p, true};
    }

    std::vector<double> beta(z.size());
    std::size_t q = nb;
    Cell cell = best;
    while (q > 0) {
        const std::size_t p = cell.prev;
        const double v = cell.tail ? b : free_value(p, q);
        for (std::size_t k = pools[p].start; k <= pools[q - 1].end; ++k) beta[k] = v;
        q = p;
        cell = f[p];
    }
    return finish(std::move(beta), problem);
}

}  // namespace nestack
