#pragma once

#include "emotrig/errors.hpp"
#include "emotrig/reprlab/matrix.hpp"
#include "emotrig/reprlab/projection.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace emotrig::reprlab {

/// Principal-component projection onto the top-k right singular directions of
/// the column-centred data. Each direction is signed so that its
/// largest-magnitude loading is positive.
inline ProjectionResult pca_project(const Matrix& x, std::size_t k = 2) {
    if (x.rows < 2) throw ArgumentError("pca_project: need at least 2 points");
    if (k == 0 || k > std::min(x.rows, x.cols))
        throw ArgumentError("pca_project: k = " + std::to_string(k) + " exceeds min(N, d) = " +
                            std::to_string(std::min(x.rows, x.cols)));

    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::MatrixXd centered = Eigen::Map<const RowMat>(x.data.data(), static_cast<Eigen::Index>(x.rows),
                                                        static_cast<Eigen::Index>(x.cols));
    centered.rowwise() -= centered.colwise().mean();

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
    Eigen::MatrixXd v = svd.matrixV().leftCols(static_cast<Eigen::Index>(k));
    for (Eigen::Index c = 0; c < v.cols(); ++c) {
        Eigen::Index arg = 0;
        v.col(c).cwiseAbs().maxCoeff(&arg);
        if (v(arg, c) < 0) v.col(c) *= -1.0;
    }
    const Eigen::MatrixXd proj = centered * v;

    ProjectionResult r;
    r.method = ProjectionMethod::pca;
    r.coords = Matrix(x.rows, k);
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t c = 0; c < k; ++c) r.coords(i, c) = proj(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));

    const auto& s = svd.singularValues();
    const double total = s.squaredNorm();
    for (std::size_t c = 0; c < k; ++c) {
        const double sv = static_cast<Eigen::Index>(c) < s.size() ? s(static_cast<Eigen::Index>(c)) : 0.0;
        r.explained_variance_ratio.push_back(total > 0 ? sv * sv / total : 0.0);
    }
    return r;
}

} // namespace emotrig::reprlab
