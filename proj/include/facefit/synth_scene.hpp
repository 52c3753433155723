/*
 * facefit - multi-view RGB-D 4D face reconstruction in modern C++.
 *
 * File: include/facefit/synth_scene.hpp
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
#include "facefit/scene.hpp"

#include <cstdint>
#include <filesystem>

namespace facefit {

/**
 * Synthetic recording generator. Renders a randomly animated face through a
 * camera arc (front view first, then alternating +-45 degree side views,
 * mirroring a three-camera rig) and writes a scene directory plus the exact
 * ground-truth sequence container under `<out_dir>/ground_truth`.
 */
struct SynthSceneConfig
{
    int frames = 10;
    int cameras = 3;
    std::uint64_t seed = 1;
    double noise_mm = 0.0; ///< Gaussian depth noise sigma in millimeters
    int width = 64;
    int height = 64;
    double fps = 30.0;
    double camera_distance_m = 1.6;
};

/** Camera pose looking from `position` toward `target`, world up (0, 1, 0). */
RigidTransform look_at_camera(const Vec3& position, const Vec3& target);

SceneInfo synth_scene(const MorphableModel& model, const SynthSceneConfig& config,
                      const std::filesystem::path& out_dir);

} // namespace facefit
