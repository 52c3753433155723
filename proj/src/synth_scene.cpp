/*
 * facefit - multi-view RGB-D 4D face reconstruction in modern C++.
 *
 * File: src/synth_scene.cpp
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
#include "facefit/synth_scene.hpp"

#include "facefit/container.hpp"
#include "facefit/error.hpp"
#include "facefit/image.hpp"
#include "facefit/renderer.hpp"
#include "facefit/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace facefit {

namespace {

struct Sinusoid
{
    double amplitude = 0.0;
    double frequency_hz = 0.0;
    double phase = 0.0;

    double at(double seconds) const
    {
        return amplitude *
               std::sin(2.0 * std::numbers::pi * frequency_hz * seconds + phase);
    }
};

std::vector<Sinusoid> draw_trajectories(Rng& rng, Eigen::Index count, double amp_lo,
                                        double amp_hi)
{
    std::vector<Sinusoid> out(static_cast<std::size_t>(count));
    for (auto& s : out)
    {
        s.amplitude = rng.uniform(amp_lo, amp_hi);
        s.frequency_hz = rng.uniform(0.2, 0.6);
        s.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    return out;
}

/** Front camera first, then +45, -45, +90, -90, ... around the vertical axis. */
double camera_yaw_rad(int index)
{
    if (index == 0)
        return 0.0;
    const int step = (index + 1) / 2;
    const double sign = (index % 2 == 1) ? 1.0 : -1.0;
    return sign * step * (std::numbers::pi / 4.0);
}

} // namespace

RigidTransform look_at_camera(const Vec3& position, const Vec3& target)
{
    const Vec3 forward = target - position;
    if (forward.norm() < 1e-12)
        throw ValidationError("look_at: camera position coincides with target");
    const Vec3 z_axis = forward.normalized();
    const Vec3 up(0.0, 1.0, 0.0);
    // image y points down, so the camera y axis is world-down projected
    // perpendicular to the viewing direction
    Vec3 y_axis = -(up - up.dot(z_axis) * z_axis);
    if (y_axis.norm() < 1e-9)
        throw ValidationError("look_at: viewing direction is vertical");
    y_axis.normalize();
    const Vec3 x_axis = y_axis.cross(z_axis);

    RigidTransform extrinsics;
    extrinsics.rotation.row(0) = x_axis.transpose();
    extrinsics.rotation.row(1) = y_axis.transpose();
    extrinsics.rotation.row(2) = z_axis.transpose();
    extrinsics.translation = -extrinsics.rotation * position;
    return extrinsics;
}

SceneInfo synth_scene(const MorphableModel& model, const SynthSceneConfig& config,
                      const std::filesystem::path& out_dir)
{
    model.validate();
    if (config.frames < 1)
        throw ValidationError("synth scene: frame count must be >= 1");
    if (config.cameras < 1)
        throw ValidationError("synth scene: camera count must be >= 1");
    if (config.width < 8 || config.height < 8)
        throw ValidationError("synth scene: image size must be at least 8x8");
    if (config.noise_mm < 0.0)
        throw ValidationError("synth scene: depth noise must be >= 0");
    if (config.fps <= 0.0)
        throw ValidationError("synth scene: fps must be positive");
    if (config.camera_distance_m <= 0.0)
        throw ValidationError("synth scene: camera distance must be positive");

    SceneInfo info;
    info.frame_count = config.frames;
    info.fps = config.fps;
    for (int k = 0; k < config.cameras; ++k)
    {
        SceneCamera cam;
        cam.id = k;
        cam.intrinsics.fx = 2.0 * config.width;
        cam.intrinsics.fy = 2.0 * config.width;
        cam.intrinsics.cx = config.width / 2.0;
        cam.intrinsics.cy = config.height / 2.0;
        cam.intrinsics.width = config.width;
        cam.intrinsics.height = config.height;
        const double yaw = camera_yaw_rad(k);
        const Vec3 position(config.camera_distance_m * std::sin(yaw), 0.0,
                            config.camera_distance_m * std::cos(yaw));
        cam.extrinsics = look_at_camera(position, Vec3::Zero());
        info.cameras.push_back(cam);
    }
    save_scene_info(out_dir, info);

    Rng rng(config.seed);
    const auto alpha_traj = draw_trajectories(rng, model.k_id(), 0.3, 0.9);
    const auto beta_traj = draw_trajectories(rng, model.k_exp(), 0.5, 1.2);
    VecX delta(model.k_tex());
    for (Eigen::Index j = 0; j < delta.size(); ++j)
        delta[j] = rng.normal(0.0, 0.5);
    std::vector<VecX> gammas;
    for (int k = 0; k < config.cameras; ++k)
    {
        VecX gamma = VecX::Zero(27);
        for (int c = 0; c < 3; ++c)
        {
            gamma[9 * c + 0] = 2.2 + rng.normal(0.0, 0.05);
            for (int b = 1; b < 9; ++b)
                gamma[9 * c + b] = rng.normal(0.0, 0.08);
        }
        gammas.push_back(gamma);
    }

    const MatN3 albedo = face_albedo(model, delta);

    FaceSequence truth;
    truth.vertex_count = model.vertex_count;
    truth.fps = config.fps;
    truth.triangles = model.triangles;

    for (int t = 0; t < config.frames; ++t)
    {
        const double seconds = t / config.fps;
        FaceParams params = FaceParams::zeros(model, {});
        for (Eigen::Index j = 0; j < params.alpha.size(); ++j)
            params.alpha[j] = alpha_traj[static_cast<std::size_t>(j)].at(seconds);
        for (Eigen::Index j = 0; j < params.beta.size(); ++j)
            params.beta[j] = beta_traj[static_cast<std::size_t>(j)].at(seconds);
        params.delta = delta;
        for (int k = 0; k < config.cameras; ++k)
            params.gamma[k] = gammas[static_cast<std::size_t>(k)];

        Mesh world = assemble_face(model, params, VertexOffsets::zeros(model.vertex_count));
        // snap to f32 so the rendered images agree bit-exactly with the
        // ground-truth container, which stores vertices as f32
        for (int v = 0; v < model.vertex_count; ++v)
            for (int c = 0; c < 3; ++c)
                world.vertices(v, c) = static_cast<float>(world.vertices(v, c));

        for (const auto& cam : info.cameras)
        {
            Mesh view;
            view.triangles = model.triangles;
            view.vertices.resize(model.vertex_count, 3);
            for (int v = 0; v < model.vertex_count; ++v)
                view.vertices.row(v) =
                    cam.extrinsics.apply(world.vertices.row(v).transpose()).transpose();
            const MatN3 normals = vertex_normals(view.vertices, *model.triangles);
            ShadingParams shading;
            shading.gamma = params.gamma.at(cam.id);
            view.albedo = sh_shade(albedo, normals, shading);

            const RenderOutput render = rasterize(view, cam.intrinsics);

            ImageRGB8 color(cam.intrinsics.width, cam.intrinsics.height);
            ImageGray16 depth(cam.intrinsics.width, cam.intrinsics.height);
            for (std::size_t pix = 0; pix < render.pixel_count(); ++pix)
            {
                for (int c = 0; c < 3; ++c)
                {
                    const double value = std::clamp(render.color[3 * pix + c], 0.0, 1.0);
                    color.data[3 * pix + c] =
                        static_cast<std::uint8_t>(std::lround(value * 255.0));
                }
                if (render.coverage[pix])
                {
                    double mm = render.depth[pix] * 1000.0;
                    if (config.noise_mm > 0.0)
                        mm += rng.normal(0.0, config.noise_mm);
                    depth.data[pix] = static_cast<std::uint16_t>(
                        std::clamp<long>(std::lround(mm), 1L, 65535L));
                }
            }

            std::vector<Vec2> landmarks;
            for (int idx : model.landmark_indices)
            {
                const Vec3 p = view.vertices.row(idx).transpose();
                if (p.z() <= kNearPlane)
                    throw NumericalError("synth scene: landmark behind camera " +
                                         std::to_string(cam.id));
                landmarks.push_back(project(cam.intrinsics, p));
            }

            save_frame(out_dir, cam.id, t, color, depth, landmarks);
        }

        truth.vertices.push_back(world.vertices);
        truth.params.push_back(params);
    }

    save_sequence(truth, (out_dir / "ground_truth").string());
    return info;
}

} // namespace facefit
