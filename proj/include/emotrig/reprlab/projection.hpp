#pragma once

#include "emotrig/reprlab/matrix.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace emotrig::reprlab {

enum class ProjectionMethod { pca, tsne };

struct TsneParams {
    double perplexity = 30.0;
    int iterations = 1000;
    double learning_rate = 200.0;
    std::uint64_t seed = 0;
    double early_exaggeration = 12.0;
    int exaggeration_iterations = 250;
    int momentum_switch_iteration = 250;
    double initial_momentum = 0.5;
    double final_momentum = 0.8;
    double init_stddev = 1e-4;
};

struct ProjectionResult {
    Matrix coords; // N x k
    ProjectionMethod method = ProjectionMethod::pca;
    TsneParams params{};                 // t-SNE only
    double effective_perplexity = 0.0;   // t-SNE only, after clamping
    std::optional<double> initial_kl;    // t-SNE only
    std::optional<double> final_kl;      // t-SNE only
    std::vector<double> explained_variance_ratio; // PCA only
    std::vector<std::string> warnings;
};

} // namespace emotrig::reprlab
