/*
 * facefit - multi-view RGB-D 4D face reconstruction in modern C++.
 *
 * File: src/anim.cpp
 *
 * Copyright 2026 The facefit authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include "facefit/anim.hpp"

#include "facefit/error.hpp"

#include <cmath>

namespace facefit {

namespace {

constexpr double kSigmaFloor = 1e-6;

void check_finite(const MatX& m, const char* who)
{
    if (!m.allFinite())
        throw ValidationError(std::string(who) + ": non-finite input");
}

} // namespace

void StyleMoments::validate() const
{
    if (mu.size() != sigma.size())
        throw ValidationError("style moments: mu has " + std::to_string(mu.size()) +
                              " channels, sigma " + std::to_string(sigma.size()));
    if (mu.size() == 0)
        throw ValidationError("style moments: empty");
    if (!mu.allFinite() || !sigma.allFinite())
        throw ValidationError("style moments: non-finite input");
    if ((sigma.array() <= 0.0).any())
        throw ValidationError("style moments: sigma must be strictly positive");
}

StyleMoments style_moments(const MatX& features)
{
    check_finite(features, "style moments");
    if (features.rows() < 1 || features.cols() < 1)
        throw ValidationError("style moments: empty feature matrix");
    StyleMoments out;
    out.mu = features.colwise().mean().transpose();
    const MatX centered = features.rowwise() - out.mu.transpose();
    out.sigma = (centered.array().square().colwise().mean()).sqrt().transpose();
    out.sigma = out.sigma.cwiseMax(kSigmaFloor);
    return out;
}

std::vector<MatN3> normalize_faces(const std::vector<MatN3>& seq)
{
    if (seq.empty())
        throw ValidationError("normalize faces: empty sequence");
    const Eigen::Index n = seq[0].rows();
    for (std::size_t t = 1; t < seq.size(); ++t)
        if (seq[t].rows() != n)
            throw ValidationError("normalize faces: frame " + std::to_string(t) + " has " +
                                  std::to_string(seq[t].rows()) + " vertices, expected " +
                                  std::to_string(n));

    MatN3 mean = MatN3::Zero(n, 3);
    for (const MatN3& frame : seq)
        mean += frame;
    mean /= static_cast<double>(seq.size());

    std::vector<MatN3> out;
    out.reserve(seq.size());
    for (const MatN3& frame : seq)
        out.push_back(frame - mean);
    return out;
}

MatX adain_fuse(const MatX& features, const StyleMoments& style)
{
    check_finite(features, "adain");
    style.validate();
    if (features.cols() != style.mu.size())
        throw ValidationError("adain: feature matrix has " +
                              std::to_string(features.cols()) + " channels, style " +
                              std::to_string(style.mu.size()));
    if (features.rows() < 1)
        throw ValidationError("adain: empty feature matrix");

    MatX out(features.rows(), features.cols());
    for (Eigen::Index c = 0; c < features.cols(); ++c)
    {
        const double mean = features.col(c).mean();
        const VecX centered = features.col(c).array() - mean;
        const double sd = std::sqrt(centered.squaredNorm() /
                                    static_cast<double>(features.rows()));
        if (sd < kSigmaFloor)
            out.col(c) = centered.array() + style.mu[c];
        else
            out.col(c) = style.sigma[c] * centered.array() / sd + style.mu[c];
    }
    return out;
}

SparsityResult sparsity_reg(const MatX& weights)
{
    check_finite(weights, "sparsity");
    const Eigen::Index m = weights.rows();
    const Eigen::Index n = weights.cols();
    if (m < 1 || n < 1)
        throw ValidationError("sparsity: empty weight matrix");

    MatX unit(m, n);  // rows of weights, unit normalized
    VecX norms(m);
    for (Eigen::Index i = 0; i < m; ++i)
    {
        const double norm = weights.row(i).norm();
        if (norm < 1e-12)
            throw ValidationError("sparsity: row " + std::to_string(i) + " is all zeros");
        norms[i] = norm;
        unit.row(i) = weights.row(i) / norm;
    }
    const MatX abs = unit.cwiseAbs();

    // With unit rows, sum_{i != j} <|u_i|, |u_j|> collapses to
    // ||sum_i |u_i|||^2 - m.
    const VecX column_total = abs.colwise().sum().transpose();
    SparsityResult out;
    out.value = column_total.squaredNorm() - static_cast<double>(m);

    // d L / d |u_i| = 2 * (column_total - |u_i|); chain through the absolute
    // value (sign, zero at zeros) and the row normalization (I - u u^T) / norm.
    out.gradient.resize(m, n);
    for (Eigen::Index i = 0; i < m; ++i)
    {
        VecX d_abs = 2.0 * (column_total - abs.row(i).transpose());
        VecX d_unit(n);
        for (Eigen::Index j = 0; j < n; ++j)
        {
            const double w = unit(i, j);
            d_unit[j] = w > 0.0 ? d_abs[j] : w < 0.0 ? -d_abs[j] : 0.0;
        }
        out.gradient.row(i) =
            (d_unit - unit.row(i).transpose() * unit.row(i).dot(d_unit)) / norms[i];
    }
    return out;
}

double anim_total_loss(const std::vector<MatN3>& pred, const std::vector<MatN3>& gt,
                       const MatX& weights, double beta, bool squared)
{
    if (pred.size() != gt.size())
        throw ValidationError("anim loss: frame count mismatch (" +
                              std::to_string(pred.size()) + " vs " +
                              std::to_string(gt.size()) + ")");
    if (pred.empty())
        throw ValidationError("anim loss: empty sequence");
    double data = 0.0;
    for (std::size_t t = 0; t < pred.size(); ++t)
    {
        if (pred[t].rows() != gt[t].rows())
            throw ValidationError("anim loss: frame " + std::to_string(t) +
                                  " vertex count mismatch (" +
                                  std::to_string(pred[t].rows()) + " vs " +
                                  std::to_string(gt[t].rows()) + ")");
        const double norm = (pred[t] - gt[t]).norm();
        data += squared ? norm * norm : norm;
    }
    return data + beta * sparsity_reg(weights).value;
}

void anim_total_loss_backward(const std::vector<MatN3>& pred, const std::vector<MatN3>& gt,
                              const MatX& weights, double beta, bool squared, double upstream,
                              std::vector<MatN3>& d_pred, MatX& d_weights)
{
    if (pred.size() != gt.size())
        throw ValidationError("anim loss backward: frame count mismatch");
    if (d_pred.size() != pred.size())
        throw ValidationError("anim loss backward: d_pred frame count mismatch");
    if (d_weights.rows() != weights.rows() || d_weights.cols() != weights.cols())
        throw ValidationError("anim loss backward: d_weights shape mismatch");
    const SparsityResult reg = sparsity_reg(weights);
    for (std::size_t t = 0; t < pred.size(); ++t)
    {
        if (pred[t].rows() != gt[t].rows() || d_pred[t].rows() != pred[t].rows())
            throw ValidationError("anim loss backward: frame " + std::to_string(t) +
                                  " shape mismatch");
        const MatN3 diff = pred[t] - gt[t];
        if (squared)
        {
            d_pred[t] += upstream * 2.0 * diff;
            continue;
        }
        const double norm = diff.norm();
        if (norm > 0.0)
            d_pred[t] += (upstream / norm) * diff;
    }
    d_weights += (upstream * beta) * reg.gradient;
}

} // namespace facefit
