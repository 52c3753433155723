/*
 * facefit - multi-view RGB-D 4D face reconstruction in modern C++.
 *
 * File: include/facefit/anim.hpp
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
#pragma once

#include "facefit/types.hpp"

#include <vector>

namespace facefit {

/**
 * Closed-form building blocks of the animation objective: sequence
 * normalization, style-moment modulation, a row-exclusivity regularizer for
 * decoding matrices, and the combined loss. All are pure functions with
 * analytic gradients where training would need them.
 */

/** Per-channel target mean and standard deviation; sigma floored at 1e-6. */
struct StyleMoments
{
    VecX mu;
    VecX sigma;

    void validate() const;
};

/** Population mean and standard deviation of each column of a T x C matrix. */
StyleMoments style_moments(const MatX& features);

/**
 * Subtracts the temporal mean face from every frame; the output's temporal
 * mean is exactly zero and the operation is idempotent.
 */
std::vector<MatN3> normalize_faces(const std::vector<MatN3>& seq);

/**
 * Re-targets each feature channel to the style moments: standardize by the
 * channel's own population statistics, then scale and shift. A channel whose
 * standard deviation falls below 1e-6 is centered and shifted without the
 * variance division, which maps a constant channel to the style mean.
 */
MatX adain_fuse(const MatX& features, const StyleMoments& style);

/**
 * Row-exclusivity penalty on an m x n decoding matrix: rows are unit
 * normalized, made non-negative entrywise, and every ordered pair (i, j != i)
 * contributes the dot product of the two non-negative rows. Zero exactly when
 * row supports are pairwise disjoint; at most m * (m - 1). The gradient flows
 * through the normalization and uses subgradient zero at exact zeros.
 */
struct SparsityResult
{
    double value = 0.0;
    MatX gradient;
};

SparsityResult sparsity_reg(const MatX& weights);

/**
 * Combined animation objective: the per-frame Frobenius norms of the vertex
 * differences, summed over frames (not squared; set `squared` for the
 * squared variant), plus beta times the decoding-matrix penalty.
 */
double anim_total_loss(const std::vector<MatN3>& pred, const std::vector<MatN3>& gt,
                       const MatX& weights, double beta = 1e-6, bool squared = false);

/**
 * Gradient of anim_total_loss. `upstream` scales everything; d_pred must hold
 * one matrix per frame, sized like pred, and d_weights must be sized like
 * weights. Both are accumulated into. A frame with zero difference norm
 * contributes a zero (sub)gradient in the unsquared variant.
 */
void anim_total_loss_backward(const std::vector<MatN3>& pred, const std::vector<MatN3>& gt,
                              const MatX& weights, double beta, bool squared, double upstream,
                              std::vector<MatN3>& d_pred, MatX& d_weights);

} // namespace facefit
