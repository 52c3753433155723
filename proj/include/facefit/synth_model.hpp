/*
 * facefit - multi-view RGB-D 4D face reconstruction in modern C++.
 *
 * File: include/facefit/synth_model.hpp
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

#include "facefit/model.hpp"

#include <cstdint>

namespace facefit {

/**
 * Generates a deterministic sphere-like triangulated head with smooth random
 * bases, replacing licensed statistical face models in tests and demos.
 *
 * The head looks along +z with +y up and is scaled so the bounding-box
 * diagonal of the "face" region is exactly 1 model unit. Basis columns are
 * random fields smoothed by repeated umbrella-Laplacian passes, then made
 * pairwise orthogonal columnwise and rescaled to plausible magnitudes.
 * Landmarks cover eyes, nose, mouth corners, lips, chin and forehead.
 *
 * Requires n >= 12; identical arguments yield bitwise identical models.
 */
MorphableModel synth_model(std::uint64_t seed, int n, int k_id, int k_exp, int k_tex);

/** Applies `passes` rounds of f_v <- (f_v + mean of neighbors) / 2 to each column. */
void umbrella_smooth(MatX& field, const std::vector<std::vector<std::int32_t>>& neighbors,
                     int passes);

} // namespace facefit
