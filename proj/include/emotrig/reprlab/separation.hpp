#pragma once

#include "emotrig/errors.hpp"
#include "emotrig/reprlab/matrix.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <vector>

namespace emotrig::reprlab {

/// Mean silhouette under Euclidean distance. Points in singleton clusters score 0.
inline double silhouette(const Matrix& points, std::span<const int> labels) {
    const std::size_t n = points.rows;
    if (labels.size() != n) throw ArgumentError("silhouette: label count does not match points");
    if (n < 3) throw ArgumentError("silhouette: need at least 3 points");
    std::map<int, std::size_t> sizes;
    for (int l : labels) ++sizes[l];
    if (sizes.size() < 2) throw ArgumentError("silhouette: need at least 2 distinct labels");

    std::vector<int> cluster_labels;
    for (const auto& [l, _] : sizes) cluster_labels.push_back(l);
    std::map<int, std::size_t> slot;
    for (std::size_t c = 0; c < cluster_labels.size(); ++c) slot[cluster_labels[c]] = c;

    double total = 0.0;
    std::vector<double> dist_sum(cluster_labels.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (sizes[labels[i]] == 1) continue;
        std::fill(dist_sum.begin(), dist_sum.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) dist_sum[slot[labels[j]]] += std::sqrt(squared_distance(points.row(i), points.row(j)));
        const std::size_t own = slot[labels[i]];
        const double a = dist_sum[own] / static_cast<double>(sizes[labels[i]] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < cluster_labels.size(); ++c)
            if (c != own) b = std::min(b, dist_sum[c] / static_cast<double>(sizes[cluster_labels[c]]));
        const double denom = std::max(a, b);
        total += denom > 0.0 ? (b - a) / denom : 0.0;
    }
    return total / static_cast<double>(n);
}

inline std::vector<double> centroid(const Matrix& m) {
    std::vector<double> c(m.cols, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t k = 0; k < m.cols; ++k) c[k] += m(i, k);
    for (auto& v : c) v /= static_cast<double>(m.rows);
    return c;
}

struct SeparationReport {
    double silhouette_g1_vs_rest = 0.0;
    double silhouette_g0_vs_g2 = 0.0;
    double centroid_g0_g1 = 0.0;
    double centroid_g0_g2 = 0.0;
    double centroid_g1_g2 = 0.0;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["silhouette_G1_vs_rest"] = silhouette_g1_vs_rest;
        j["silhouette_G0_vs_G2"] = silhouette_g0_vs_g2;
        j["centroid_distances"] = {{"G0_G1", centroid_g0_g1}, {"G0_G2", centroid_g0_g2}, {"G1_G2", centroid_g1_g2}};
        return j;
    }
};

/// Cluster geometry of the clean (G0), emotional (G1) and de-emotionalised
/// (G2) groups: silhouette of G1 against G0 and G2 together, silhouette of G0
/// against G2 alone, and the pairwise centroid distances.
inline SeparationReport separation_report(const Matrix& g0, const Matrix& g1, const Matrix& g2) {
    if (g0.rows == 0 || g1.rows == 0 || g2.rows == 0) throw ArgumentError("separation_report: every group needs points");
    if (g0.cols != g1.cols || g0.cols != g2.cols) throw ArgumentError("separation_report: dimension mismatch");

    SeparationReport r;
    {
        const Matrix* parts[] = {&g0, &g2, &g1};
        const Matrix all = vstack(parts);
        std::vector<int> labels(all.rows, 0);
        std::fill(labels.begin() + static_cast<std::ptrdiff_t>(g0.rows + g2.rows), labels.end(), 1);
        r.silhouette_g1_vs_rest = silhouette(all, labels);
    }
    {
        const Matrix* parts[] = {&g0, &g2};
        const Matrix both = vstack(parts);
        std::vector<int> labels(both.rows, 0);
        std::fill(labels.begin() + static_cast<std::ptrdiff_t>(g0.rows), labels.end(), 2);
        r.silhouette_g0_vs_g2 = silhouette(both, labels);
    }
    const auto c0 = centroid(g0), c1 = centroid(g1), c2 = centroid(g2);
    r.centroid_g0_g1 = std::sqrt(squared_distance(c0, c1));
    r.centroid_g0_g2 = std::sqrt(squared_distance(c0, c2));
    r.centroid_g1_g2 = std::sqrt(squared_distance(c1, c2));
    return r;
}

} // namespace emotrig::reprlab
