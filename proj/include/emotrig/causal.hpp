#pragma once

#include "emotrig/embedder.hpp"
#include "emotrig/errors.hpp"
#include "emotrig/metrics.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace emotrig {

/// One unit of the treatment/outcome table: t = 1 for the emotional group,
/// y = 1 when the backdoor fired.
struct CausalSample {
    std::string sample_id;
    int t = 0;
    int y = 0;
};

struct AteReport {
    double ate = 0.0;
    double intercept = 0.0;
    double rate_treated = 0.0;
    double rate_control = 0.0;
    double std_error = 0.0;
    double z = 0.0;
    double p_value = 1.0;
    std::size_t n_treated = 0;
    std::size_t n_control = 0;
    bool small_sample = false; // either group below 30 units

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["ate"] = ate;
        j["intercept"] = intercept;
        j["rate_treated"] = rate_treated;
        j["rate_control"] = rate_control;
        j["std_error"] = std_error;
        j["z"] = std::isfinite(z) ? nlohmann::ordered_json(z) : nlohmann::ordered_json(z > 0 ? "inf" : "-inf");
        j["p_value"] = p_value;
        j["n_treated"] = n_treated;
        j["n_control"] = n_control;
        j["small_sample"] = small_sample;
        return j;
    }
};

inline constexpr std::size_t kSmallSampleGroup = 30;

/// Two-sided normal tail probability.
inline double two_sided_normal_p(double z) { return std::erfc(std::fabs(z) / std::sqrt(2.0)); }

/// Average treatment effect by ordinary least squares of y on [1, t].
///
/// With a single binary regressor and no covariates the slope is the
/// difference of group activation rates. The standard error is the classical
/// homoskedastic one, sqrt(RSS / (n - 2) / Sxx), and the p-value uses the
/// normal approximation. Constant outcomes, or fewer than three units, give
/// std_error 0 and p_value 1.
inline AteReport estimate_ate(std::span<const CausalSample> samples) {
    AteReport r;
    double sum_t = 0.0, sum_y = 0.0, sum_y_treated = 0.0, sum_y_control = 0.0;
    for (const auto& s : samples) {
        if ((s.t != 0 && s.t != 1) || (s.y != 0 && s.y != 1))
            throw ArgumentError("causal sample '" + s.sample_id + "' has a non-binary t or y");
        sum_t += s.t;
        sum_y += s.y;
        if (s.t) {
            ++r.n_treated;
            sum_y_treated += s.y;
        } else {
            ++r.n_control;
            sum_y_control += s.y;
        }
    }
    if (r.n_treated == 0 || r.n_control == 0)
        throw EstimationError("estimate_ate needs at least one treated and one control sample");

    const double n = static_cast<double>(samples.size());
    const double t_bar = sum_t / n;
    const double y_bar = sum_y / n;
    double sxx = 0.0, sxy = 0.0;
    for (const auto& s : samples) {
        sxx += (s.t - t_bar) * (s.t - t_bar);
        sxy += (s.t - t_bar) * (s.y - y_bar);
    }
    r.ate = sxy / sxx;
    r.intercept = y_bar - r.ate * t_bar;
    r.rate_treated = sum_y_treated / static_cast<double>(r.n_treated);
    r.rate_control = sum_y_control / static_cast<double>(r.n_control);
    r.small_sample = r.n_treated < kSmallSampleGroup || r.n_control < kSmallSampleGroup;

    const bool constant_y = sum_y == 0.0 || sum_y == n;
    if (constant_y || samples.size() < 3) {
        r.std_error = 0.0;
        r.z = 0.0;
        r.p_value = 1.0;
        return r;
    }
    double rss = 0.0;
    for (const auto& s : samples) {
        const double e = s.y - (r.intercept + r.ate * s.t);
        rss += e * e;
    }
    r.std_error = std::sqrt(rss / (n - 2.0) / sxx);
    if (r.std_error == 0.0) {
        // outcomes perfectly determined by treatment
        r.z = r.ate > 0 ? INFINITY : -INFINITY;
        r.p_value = 0.0;
    } else {
        r.z = r.ate / r.std_error;
        r.p_value = two_sided_normal_p(r.z);
    }
    return r;
}

/// Mean cosine between id-aligned control and treated representations.
inline double mean_group_cosine(const std::map<std::string, std::vector<double>>& control,
                                const std::map<std::string, std::vector<double>>& treated) {
    if (control.empty()) throw ArgumentError("mean_group_cosine: no pairs");
    std::vector<std::string> unmatched;
    for (const auto& [id, _] : control)
        if (!treated.count(id)) unmatched.push_back(id);
    for (const auto& [id, _] : treated)
        if (!control.count(id)) unmatched.push_back(id);
    if (!unmatched.empty()) {
        std::string msg = "mean_group_cosine: unmatched ids:";
        for (std::size_t i = 0; i < unmatched.size() && i < 5; ++i) msg += " " + unmatched[i];
        throw ArgumentError(msg);
    }
    double total = 0.0;
    for (const auto& [id, v] : control) total += cosine(v, treated.at(id));
    return total / static_cast<double>(control.size());
}

/// y = 1 iff BERTScore F1 of the response against the target exceeds tau.
inline int activation_outcome(std::string_view response, std::string_view target, const Embedder& token_embedder,
                              double tau = kDefaultTau) {
    if (text::trim(response).empty() || text::trim(target).empty())
        throw ArgumentError("activation_outcome: empty response or target");
    return bertscore_text(target, response, token_embedder).f1 > tau ? 1 : 0;
}

} // namespace emotrig
