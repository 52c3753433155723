/*
 * facefit - multi-view RGB-D 4D face reconstruction in modern C++.
 *
 * File: include/facefit/optim.hpp
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

namespace facefit {

struct AdamConfig
{
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/**
 * First and second moment estimates for one parameter block. A fitting
 * stage owns one AdamMoments per active block and a shared step counter.
 */
struct AdamMoments
{
    VecX m;
    VecX v;

    static AdamMoments zeros(Eigen::Index n);
};

/**
 * One bias-corrected Adam update of a parameter block in place. `t` is the
 * 1-based number of steps taken so far including this one.
 */
void adam_step(VecX& param, const VecX& grad, AdamMoments& moments, int t,
               const AdamConfig& config);

/**
 * Folds a gradient into the moment estimates without moving the parameters.
 * Keeps a frozen block's step-size statistics current so that unfreezing it
 * later starts from calibrated moments instead of a +/-lr jolt.
 */
void adam_accumulate(const VecX& grad, AdamMoments& moments, const AdamConfig& config);

} // namespace facefit
