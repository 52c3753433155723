/*
 * facefit - multi-view RGB-D 4D face reconstruction in modern C++.
 *
 * File: include/facefit/scene.hpp
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

#include "facefit/camera.hpp"
#include "facefit/types.hpp"

#include <filesystem>
#include <vector>

namespace facefit {

/**
 * On-disk multi-camera recording. A scene directory holds `scene.json`
 * describing the rig plus, per camera, `cam{ID}/color_{frame:06}.png`
 * (8-bit RGB), `cam{ID}/depth_{frame:06}.png` (16-bit, millimeters, 0 =
 * invalid) and `cam{ID}/landmarks_{frame:06}.json` (array of [u, v]).
 */

inline constexpr int kSceneFormatVersion = 1;

struct SceneCamera
{
    int id = 0;
    CameraIntrinsics intrinsics;
    RigidTransform extrinsics; ///< world -> camera
};

struct SceneInfo
{
    int frame_count = 0;
    double fps = 30.0;
    std::vector<SceneCamera> cameras;
};

/** Writes `scene.json` into the directory, creating it if needed. */
void save_scene_info(const std::filesystem::path& dir, const SceneInfo& info);

/**
 * Reads and validates `scene.json`. Throws IoError when the file is missing
 * or unparseable, ValidationError on contract violations (unknown version,
 * duplicate camera ids, bad intrinsics or extrinsics).
 */
SceneInfo load_scene_info(const std::filesystem::path& dir);

/** File name of one per-camera frame asset, e.g. color_000003.png. */
std::string frame_file_name(const std::string& kind, int frame_index,
                            const std::string& extension);

/**
 * Loads one camera's data for one frame. Throws IoError naming the camera
 * and frame when a file is missing.
 */
RGBDFrame load_frame(const std::filesystem::path& dir, const SceneCamera& camera,
                     int frame_index);

/** Writes one camera's color/depth/landmark files for one frame. */
void save_frame(const std::filesystem::path& dir, int camera_id, int frame_index,
                const ImageRGB8& color, const ImageGray16& depth,
                const std::vector<Vec2>& landmarks);

} // namespace facefit
