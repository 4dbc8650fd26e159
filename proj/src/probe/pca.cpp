// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#include <Eigen/Dense>
#include <cmath>

#include "flexsel/errors.hpp"
#include "flexsel/probe.hpp"

namespace flexsel {

PcaResult pca_project(const Tensor& tokens, size_t components) {
    const size_t n = tokens.rows();
    const size_t d = tokens.cols();
    if (n < 2) {
        throw InvalidArgument("pca_project needs at least two rows");
    }
    if (components < 1 || components > d) {
        throw InvalidArgument("pca_project: " + std::to_string(components) + " components requested for " +
                              std::to_string(d) + " features");
    }
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const RowMajor> x(tokens.data().data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const Eigen::MatrixXd centered = x.rowwise() - mean;
    const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
    const double total = cov.trace();
    if (!(total > 1e-12)) {
        throw DegenerateInputError("pca_project: input has zero variance");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    // eigenvalues ascend; take from the back
    PcaResult result;
    result.projection = Tensor::matrix(n, components);
    for (size_t c = 0; c < components; ++c) {
        const Eigen::Index col = static_cast<Eigen::Index>(d - 1 - c);
        Eigen::VectorXd axis = solver.eigenvectors().col(col);
        Eigen::Index argmax = 0;
        axis.cwiseAbs().maxCoeff(&argmax);
        if (axis(argmax) < 0) {
            axis = -axis;
        }
        const Eigen::VectorXd proj = centered * axis;
        for (size_t i = 0; i < n; ++i) {
            result.projection(i, c) = proj(static_cast<Eigen::Index>(i));
        }
        const double var = std::max(0.0, solver.eigenvalues()(col));
        result.explained_variance.push_back(var);
        result.explained_ratio.push_back(var / total);
    }
    return result;
}

}  // namespace flexsel
