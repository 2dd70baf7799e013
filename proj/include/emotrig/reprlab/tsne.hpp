#pragma once

#include "emotrig/errors.hpp"
#include "emotrig/random.hpp"
#include "emotrig/reprlab/matrix.hpp"
#include "emotrig/reprlab/projection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace emotrig::reprlab {

struct SigmaSearchResult {
    double sigma = 1.0;
    double perplexity = 0.0; // achieved perplexity at sigma
    int iterations = 0;
    bool converged = false;
};

namespace detail {

/// Conditional p_j ∝ exp(-(d_j - d_min) / (2 sigma^2)); returns perplexity 2^H.
inline double conditional_row(std::span<const double> sq_dist, double sigma, std::span<double> out) {
    const double d_min = *std::min_element(sq_dist.begin(), sq_dist.end());
    const double beta = 1.0 / (2.0 * sigma * sigma);
    double sum = 0.0;
    for (std::size_t j = 0; j < sq_dist.size(); ++j) {
        out[j] = std::exp(-(sq_dist[j] - d_min) * beta);
        sum += out[j];
    }
    double h = 0.0;
    for (auto& p : out) {
        p /= sum;
        if (p > 0.0) h -= p * std::log2(p);
    }
    return std::exp2(h);
}

} // namespace detail

/// Gaussian bandwidth whose conditional distribution over `sq_distances_row`
/// (self excluded) has perplexity 2^H equal to the target.
///
/// Perplexity is non-decreasing in sigma, so the search brackets the target
/// on log(sigma) by unit steps and then bisects. If the target cannot be
/// reached (it exceeds the row length, or the row is uniform) the closest
/// sigma seen is returned with converged = false.
inline SigmaSearchResult perplexity_sigma_search(std::span<const double> sq_distances_row, double target_perplexity,
                                                 double tol = 1e-4, int max_iter = 64) {
    if (sq_distances_row.empty()) throw ArgumentError("perplexity_sigma_search: empty row");
    if (!(target_perplexity >= 1.0)) throw ArgumentError("perplexity_sigma_search: target perplexity must be >= 1");
    const double d_max = *std::max_element(sq_distances_row.begin(), sq_distances_row.end());
    if (d_max <= 0.0) throw DegenerateError("perplexity_sigma_search: all distances are zero");

    std::vector<double> p(sq_distances_row.size());
    SigmaSearchResult best;
    double best_gap = std::numeric_limits<double>::infinity();
    int evals = 0;
    auto eval = [&](double log_sigma) {
        const double sigma = std::exp(log_sigma);
        const double perp = detail::conditional_row(sq_distances_row, sigma, p);
        ++evals;
        const double gap = std::fabs(perp - target_perplexity);
        if (gap < best_gap) {
            best_gap = gap;
            best = {sigma, perp, evals, gap <= tol};
        }
        return perp;
    };

    double mean = 0.0;
    for (double d : sq_distances_row) mean += d;
    mean /= static_cast<double>(sq_distances_row.size());
    double cur = 0.5 * std::log(mean);
    double perp = eval(cur);
    if (best.converged) return best;

    // Bracket [lo, hi] with perp(lo) < target <= perp(hi).
    double lo = cur, hi = cur;
    constexpr int kMaxBracketSteps = 200;
    if (perp < target_perplexity) {
        for (int s = 0; s < kMaxBracketSteps && perp < target_perplexity; ++s) {
            lo = hi;
            hi += 1.0;
            perp = eval(hi);
        }
        if (perp < target_perplexity) return best; // unreachable from above
    } else {
        for (int s = 0; s < kMaxBracketSteps && perp >= target_perplexity; ++s) {
            hi = lo;
            lo -= 1.0;
            perp = eval(lo);
        }
        if (perp >= target_perplexity) return best;
    }
    if (best.converged) return best;

    for (int it = 0; it < max_iter; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double pm = eval(mid);
        if (best.converged) break;
        if (pm < target_perplexity) lo = mid;
        else hi = mid;
    }
    best.iterations = evals;
    return best;
}

inline constexpr double kProbabilityFloor = 1e-12;

/// Symmetric joint probabilities P = (P_cond + P_cond^T) / 2N, floored at
/// 1e-12 off the diagonal and renormalised to sum 1. Rows whose points are all
/// duplicates of the anchor use a uniform conditional.
inline Matrix joint_probabilities(const Matrix& x, double perplexity, std::vector<std::string>* warnings = nullptr) {
    const std::size_t n = x.rows;
    const Matrix d = squared_distances(x);
    Matrix cond(n, n);
    std::vector<double> row(n - 1), p(n - 1);
    std::size_t unconverged = 0, degenerate = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0, k = 0; j < n; ++j)
            if (j != i) row[k++] = d(i, j);
        if (*std::max_element(row.begin(), row.end()) <= 0.0) {
            std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(n - 1));
            ++degenerate;
        } else {
            const auto s = perplexity_sigma_search(row, perplexity);
            if (!s.converged) ++unconverged;
            detail::conditional_row(row, s.sigma, p);
        }
        for (std::size_t j = 0, k = 0; j < n; ++j)
            if (j != i) cond(i, j) = p[k++];
    }
    if (warnings && unconverged)
        warnings->push_back(std::to_string(unconverged) + " rows did not reach the target perplexity");
    if (warnings && degenerate)
        warnings->push_back(std::to_string(degenerate) + " rows had only duplicate neighbours");

    Matrix joint(n, n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double v = std::max((cond(i, j) + cond(j, i)) / (2.0 * static_cast<double>(n)), kProbabilityFloor);
            joint(i, j) = v;
            total += v;
        }
    }
    for (auto& v : joint.data) v /= total;
    return joint;
}

/// KL(P || Q) with Q the Student-t affinities of the embedding y.
inline double kl_divergence(const Matrix& p, const Matrix& y) {
    const std::size_t n = y.rows;
    double sum_num = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) sum_num += 1.0 / (1.0 + squared_distance(y.row(i), y.row(j)));
    double kl = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j || p(i, j) <= 0.0) continue;
            const double q = (1.0 / (1.0 + squared_distance(y.row(i), y.row(j)))) / sum_num;
            kl += p(i, j) * std::log(p(i, j) / q);
        }
    }
    return kl;
}

/// Exact O(N^2) t-SNE into two dimensions.
///
/// Gradient descent with momentum and per-coordinate gains, early
/// exaggeration of P, and re-centring after every step. Initial coordinates
/// are N(0, init_stddev^2) draws from SplitMix64(seed), so identical inputs
/// give bit-identical output. Perplexity above (N - 1) / 3 is clamped down.
inline ProjectionResult tsne_exact(const Matrix& x, TsneParams params = {}) {
    const std::size_t n = x.rows;
    if (n < 4) throw ArgumentError("tsne_exact: need at least 4 points");
    if (params.iterations < 1) throw ArgumentError("tsne_exact: iterations must be positive");
    if (!(params.perplexity > 0.0)) throw ArgumentError("tsne_exact: perplexity must be positive");
    for (double v : x.data)
        if (!std::isfinite(v)) throw NumericalError("tsne_exact: non-finite input");

    ProjectionResult r;
    r.method = ProjectionMethod::tsne;
    r.params = params;
    const double max_perplexity = static_cast<double>(n - 1) / 3.0;
    r.effective_perplexity = params.perplexity;
    if (params.perplexity > max_perplexity) {
        r.effective_perplexity = std::max(1.0, max_perplexity);
        r.warnings.push_back("perplexity " + std::to_string(params.perplexity) + " clamped to " +
                             std::to_string(r.effective_perplexity) + " for " + std::to_string(n) + " points");
    }

    const Matrix p = joint_probabilities(x, r.effective_perplexity, &r.warnings);

    constexpr std::size_t kDims = 2;
    Matrix y(n, kDims);
    SplitMix64 rng(params.seed);
    for (auto& v : y.data) v = params.init_stddev * rng.normal();
    r.initial_kl = kl_divergence(p, y);

    Matrix update(n, kDims), gains(n, kDims, 1.0), grad(n, kDims);
    std::vector<double> num(n * n);
    for (int iter = 0; iter < params.iterations; ++iter) {
        const double exaggeration = iter < params.exaggeration_iterations ? params.early_exaggeration : 1.0;
        const double momentum = iter < params.momentum_switch_iteration ? params.initial_momentum : params.final_momentum;

        double sum_num = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            num[i * n + i] = 0.0;
            for (std::size_t j = i + 1; j < n; ++j) {
                const double q = 1.0 / (1.0 + squared_distance(y.row(i), y.row(j)));
                num[i * n + j] = num[j * n + i] = q;
                sum_num += 2.0 * q;
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            double g0 = 0.0, g1 = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                const double w = num[i * n + j];
                const double mult = (exaggeration * p(i, j) - w / sum_num) * w;
                g0 += mult * (y(i, 0) - y(j, 0));
                g1 += mult * (y(i, 1) - y(j, 1));
            }
            grad(i, 0) = 4.0 * g0;
            grad(i, 1) = 4.0 * g1;
        }
        for (std::size_t k = 0; k < grad.data.size(); ++k) {
            const double g = grad.data[k];
            if (!std::isfinite(g)) throw NumericalError("tsne_exact: non-finite gradient at iteration " + std::to_string(iter));
            double& gain = gains.data[k];
            gain = (g > 0.0) != (update.data[k] > 0.0) ? gain + 0.2 : gain * 0.8;
            if (gain < 0.01) gain = 0.01;
            update.data[k] = momentum * update.data[k] - params.learning_rate * gain * g;
            y.data[k] += update.data[k];
        }
        for (std::size_t c = 0; c < kDims; ++c) {
            double mean = 0.0;
            for (std::size_t i = 0; i < n; ++i) mean += y(i, c);
            mean /= static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) y(i, c) -= mean;
        }
    }
    r.final_kl = kl_divergence(p, y);
    if (!(*r.final_kl < *r.initial_kl))
        r.warnings.push_back("final KL did not fall below the initial KL; the run needs more iterations");
    r.coords = std::move(y);
    return r;
}

} // namespace emotrig::reprlab
