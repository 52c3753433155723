/*
 * facefit - multi-view RGB-D 4D face reconstruction in modern C++.
 *
 * File: src/optim.cpp
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
#include "facefit/optim.hpp"

#include "facefit/error.hpp"

#include <cmath>
#include <string>

namespace facefit {

AdamMoments AdamMoments::zeros(Eigen::Index n)
{
    AdamMoments moments;
    moments.m = VecX::Zero(n);
    moments.v = VecX::Zero(n);
    return moments;
}

void adam_step(VecX& param, const VecX& grad, AdamMoments& moments, int t,
               const AdamConfig& config)
{
    if (param.size() != grad.size() || param.size() != moments.m.size() ||
        param.size() != moments.v.size())
    {
        throw ValidationError("adam: block size mismatch (param " +
                              std::to_string(param.size()) + ", grad " +
                              std::to_string(grad.size()) + ", moments " +
                              std::to_string(moments.m.size()) + ")");
    }
    if (t < 1)
        throw ValidationError("adam: step index must be >= 1");

    adam_accumulate(grad, moments, config);
    const double corr1 = 1.0 - std::pow(config.beta1, t);
    const double corr2 = 1.0 - std::pow(config.beta2, t);
    for (Eigen::Index i = 0; i < param.size(); ++i)
    {
        const double m_hat = moments.m[i] / corr1;
        const double v_hat = moments.v[i] / corr2;
        param[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
}

void adam_accumulate(const VecX& grad, AdamMoments& moments, const AdamConfig& config)
{
    if (grad.size() != moments.m.size() || grad.size() != moments.v.size())
    {
        throw ValidationError("adam: block size mismatch (grad " +
                              std::to_string(grad.size()) + ", moments " +
                              std::to_string(moments.m.size()) + ")");
    }
    moments.m = config.beta1 * moments.m + (1.0 - config.beta1) * grad;
    moments.v = config.beta2 * moments.v + (1.0 - config.beta2) * grad.cwiseProduct(grad);
}

} // namespace facefit
