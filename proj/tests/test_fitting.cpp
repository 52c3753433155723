/*
 * facefit - multi-view RGB-D 4D face reconstruction in modern C++.
 *
 * File: tests/test_fitting.cpp
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
#include "facefit/container.hpp"
#include "facefit/error.hpp"
#include "facefit/fitting.hpp"
#include "facefit/renderer.hpp"
#include "facefit/rng.hpp"
#include "facefit/synth_model.hpp"
#include "facefit/synth_scene.hpp"

#include <doctest.h>

#include "helpers.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

namespace fs = std::filesystem;
using namespace facefit;

namespace {

fs::path fresh_dir(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / "facefit_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<unsigned char> slurp(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/**
 * 3x3 planar vertex grid at z = 2 in front of an identity-pose camera with
 * power-of-two focal length. Every projection lands on an exact integer
 * pixel and every covered pixel interpolates depth exactly 2.0, so a frame
 * rendered from it reproduces with zero residual in every loss term.
 */
struct GridFixture
{
    MorphableModel model;
    std::vector<SceneCamera> rig;
    std::vector<RGBDFrame> views;
};

MorphableModel grid_model()
{
    MorphableModel m;
    m.vertex_count = 9;
    m.mean_shape.resize(9, 3);
    int row = 0;
    for (int gy = 0; gy < 3; ++gy)
        for (int gx = 0; gx < 3; ++gx)
        {
            m.mean_shape.row(row) << -0.25 + 0.25 * gx, -0.25 + 0.25 * gy, 2.0;
            ++row;
        }
    m.identity_basis = MatX::Zero(27, 2);
    m.identity_basis(0, 0) = 0.05;
    m.identity_basis(13, 1) = 0.05;
    m.expression_basis = MatX::Zero(27, 2);
    m.expression_basis(4, 0) = 0.05;
    m.expression_basis(26, 1) = 0.05;
    m.texture_mean = MatN3::Constant(9, 3, 0.5);
    m.texture_basis = MatX::Zero(27, 2);
    m.texture_basis(1, 0) = 0.2;
    m.texture_basis(14, 1) = 0.2;
    auto tris = std::make_shared<TriangleList>();
    for (int gy = 0; gy < 2; ++gy)
        for (int gx = 0; gx < 2; ++gx)
        {
            const std::int32_t a = 3 * gy + gx;
            tris->push_back({a, a + 1, a + 3});
            tris->push_back({a + 1, a + 4, a + 3});
        }
    m.triangles = tris;
    m.landmark_indices = {0, 1, 2, 3, 4, 5, 6, 7, 8};
    m.regions["face"] = {0, 1, 2, 3, 4, 5, 6, 7, 8};
    m.regions["lip"] = {0, 1, 2};
    m.regions["upper"] = {6, 7, 8};
    m.validate();
    return m;
}

SceneCamera grid_camera(int id)
{
    SceneCamera cam;
    cam.id = id;
    cam.intrinsics.fx = 128;
    cam.intrinsics.fy = 128;
    cam.intrinsics.cx = 32;
    cam.intrinsics.cy = 32;
    cam.intrinsics.width = 64;
    cam.intrinsics.height = 64;
    return cam;
}

/** Renders a view of the assembled face exactly as the fitter does. */
RenderOutput render_view(const MorphableModel& model, const FaceParams& params,
                         const VertexOffsets& offsets, const SceneCamera& camera)
{
    const Mesh face = assemble_face(model, params, offsets);
    MatN3 cam_vertices(model.vertex_count, 3);
    for (int v = 0; v < model.vertex_count; ++v)
        cam_vertices.row(v) = camera.extrinsics.apply(face.vertices.row(v)).transpose();
    Mesh mesh;
    mesh.vertices = cam_vertices;
    mesh.triangles = model.triangles;
    mesh.albedo = sh_shade(face_albedo(model, params.delta),
                           vertex_normals(cam_vertices, *model.triangles),
                           ShadingParams{params.gamma.at(camera.id)});
    return rasterize(mesh, camera.intrinsics);
}

std::vector<Vec2> project_landmarks(const MorphableModel& model, const FaceParams& params,
                                    const VertexOffsets& offsets, const SceneCamera& camera)
{
    const Mesh face = assemble_face(model, params, offsets);
    std::vector<Vec2> out;
    out.reserve(model.landmark_indices.size());
    for (int idx : model.landmark_indices)
    {
        const Vec3 p = camera.extrinsics.apply(face.vertices.row(idx));
        out.push_back(project(camera.intrinsics, p));
    }
    return out;
}

/** Quantizes a render into an exactly consistent observed RGB-D frame. */
RGBDFrame frame_from_render(const RenderOutput& rendered, const SceneCamera& camera,
                            const std::vector<Vec2>& landmarks)
{
    RGBDFrame frame;
    frame.camera_id = camera.id;
    frame.color = ImageRGB8(rendered.width, rendered.height);
    frame.depth = ImageGray16(rendered.width, rendered.height);
    for (std::size_t pix = 0; pix < rendered.pixel_count(); ++pix)
    {
        for (int ch = 0; ch < 3; ++ch)
        {
            const double c = std::clamp(rendered.color[pix * 3 + ch], 0.0, 1.0);
            frame.color.data[pix * 3 + ch] =
                static_cast<unsigned char>(std::lround(c * 255.0));
        }
        if (rendered.coverage[pix])
            frame.depth.data[pix] =
                static_cast<std::uint16_t>(std::lround(rendered.depth[pix] * 1000.0));
    }
    frame.landmarks2d = landmarks;
    return frame;
}

GridFixture grid_fixture()
{
    GridFixture fx;
    fx.model = grid_model();
    fx.rig = {grid_camera(0)};
    const FaceParams params = FaceParams::zeros(fx.model, {0});
    const VertexOffsets offsets = VertexOffsets::zeros(fx.model.vertex_count);
    const RenderOutput rendered = render_view(fx.model, params, offsets, fx.rig[0]);
    fx.views = {frame_from_render(rendered, fx.rig[0],
                                  project_landmarks(fx.model, params, offsets, fx.rig[0]))};
    return fx;
}

double block_rel_error(const VecX& analytic, const VecX& fd)
{
    const double scale =
        std::max({analytic.cwiseAbs().maxCoeff(), fd.cwiseAbs().maxCoeff(), 1e-12});
    return (analytic - fd).cwiseAbs().maxCoeff() / scale;
}

double mean_vertex_error(const MatN3& a, const MatN3& b)
{
    REQUIRE(a.rows() == b.rows());
    return (a - b).rowwise().norm().mean();
}

} // namespace

TEST_SUITE("fitting")
{
    TEST_CASE("perfect reconstruction scores exactly zero in every stage")
    {
        const GridFixture fx = grid_fixture();
        const FaceParams params = FaceParams::zeros(fx.model, {0});
        const VertexOffsets offsets = VertexOffsets::zeros(fx.model.vertex_count);
        const MeshTopology topo = MeshTopology::build(*fx.model.triangles, 9);
        const MatN3 reference = assemble_face(fx.model, params, offsets).vertices;
        const FitConfig config;

        const StageObjective lm = total_loss(FitStage::Landmark, fx.model, fx.rig, fx.views,
                                             params, offsets, nullptr, topo, config, nullptr);
        CHECK(lm.total == 0.0);
        CHECK(lm.terms.at("lm3d") == 0.0);
        CHECK(lm.terms.at("prior") == 0.0);

        const StageObjective dmm = total_loss(FitStage::Dmm, fx.model, fx.rig, fx.views,
                                              params, offsets, nullptr, topo, config, nullptr);
        CHECK(dmm.total == 0.0);
        CHECK(dmm.terms.at("rgb") == 0.0);
        CHECK(dmm.terms.at("depth") == 0.0);
        CHECK(dmm.terms.at("lm2d") == 0.0);

        const StageObjective vtx = total_loss(FitStage::Vertex, fx.model, fx.rig, fx.views,
                                              params, offsets, &reference, topo, config,
                                              nullptr);
        CHECK(vtx.total == 0.0);
        CHECK(vtx.terms.at("edge") == 0.0);
        CHECK(vtx.terms.at("laplacian") == 0.0);
        CHECK(vtx.terms.at("offset") == 0.0);
    }

    TEST_CASE("vertex stage equals dmm stage with zero offsets and self reference")
    {
        const GridFixture fx = grid_fixture();
        FaceParams params = FaceParams::zeros(fx.model, {0});
        params.alpha << 0.4, -0.7;
        params.beta << 0.2, 0.5;
        params.delta << -0.3, 0.6;
        params.gamma[0][0] = params.gamma[0][9] = params.gamma[0][18] = 0.8;
        const VertexOffsets offsets = VertexOffsets::zeros(fx.model.vertex_count);
        const MeshTopology topo = MeshTopology::build(*fx.model.triangles, 9);
        const MatN3 reference = assemble_face(fx.model, params, offsets).vertices;
        const FitConfig config;

        const StageObjective dmm = total_loss(FitStage::Dmm, fx.model, fx.rig, fx.views,
                                              params, offsets, nullptr, topo, config, nullptr);
        const StageObjective vtx = total_loss(FitStage::Vertex, fx.model, fx.rig, fx.views,
                                              params, offsets, &reference, topo, config,
                                              nullptr);
        CHECK(dmm.total > 0.0);
        CHECK(vtx.total == dmm.total);
        CHECK(vtx.terms.at("edge") == 0.0);
        CHECK(vtx.terms.at("laplacian") == 0.0);
        CHECK(vtx.terms.at("offset") == 0.0);
    }

    TEST_CASE("duplicated cameras triple the shared-parameter gradients")
    {
        const GridFixture fx = grid_fixture();

        // Evaluate at zero alpha/beta/delta so the single-count prior term has
        // zero gradient and the data terms scale exactly with the rig size.
        auto make_params = [&](const std::vector<int>& ids) {
            FaceParams p = FaceParams::zeros(fx.model, ids);
            for (int id : ids)
                p.gamma[id][0] = p.gamma[id][9] = p.gamma[id][18] = 0.8;
            return p;
        };

        // Observations differ from the render so gradients are nonzero.
        RGBDFrame observed = fx.views[0];
        for (std::size_t i = 0; i < observed.color.data.size(); ++i)
            observed.color.data[i] = static_cast<unsigned char>(40);
        for (std::size_t i = 0; i < observed.depth.data.size(); ++i)
            if (observed.depth.data[i] != 0)
                observed.depth.data[i] = static_cast<std::uint16_t>(2030);
        for (Vec2& lm : observed.landmarks2d)
            lm += Vec2(0.7, -0.4);

        const MeshTopology topo = MeshTopology::build(*fx.model.triangles, 9);
        const VertexOffsets offsets = VertexOffsets::zeros(9);
        const FitConfig config;

        ParamGrads single = ParamGrads::zeros(fx.model, {0});
        total_loss(FitStage::Dmm, fx.model, fx.rig, {observed}, make_params({0}), offsets,
                   nullptr, topo, config, &single);

        std::vector<SceneCamera> rig3 = {grid_camera(0), grid_camera(1), grid_camera(2)};
        std::vector<RGBDFrame> views3(3, observed);
        views3[1].camera_id = 1;
        views3[2].camera_id = 2;
        ParamGrads triple = ParamGrads::zeros(fx.model, {0, 1, 2});
        total_loss(FitStage::Dmm, fx.model, rig3, views3, make_params({0, 1, 2}), offsets,
                   nullptr, topo, config, &triple);

        CHECK(single.d_alpha.norm() > 0.0);
        CHECK(block_rel_error(triple.d_alpha, 3.0 * single.d_alpha) <= 1e-9);
        CHECK(block_rel_error(triple.d_beta, 3.0 * single.d_beta) <= 1e-9);
        CHECK(block_rel_error(triple.d_delta, 3.0 * single.d_delta) <= 1e-9);
        const MatN3 scaled = 3.0 * single.d_offsets;
        const double off_scale = std::max(
            {triple.d_offsets.cwiseAbs().maxCoeff(), scaled.cwiseAbs().maxCoeff(), 1e-12});
        CHECK((triple.d_offsets - scaled).cwiseAbs().maxCoeff() / off_scale <= 1e-9);
        for (int id : {0, 1, 2})
            CHECK(block_rel_error(triple.d_gamma.at(id), single.d_gamma.at(0)) <= 1e-12);
    }

    TEST_CASE("stage-total gradients match finite differences")
    {
        // Face-like model in front of a two-camera arc; observed images are
        // the eval-point render plus offsets large enough to keep every
        // residual away from the |.|-kinks yet inside the truncation band.
        const MorphableModel model = synth_model(3, 100, 3, 3, 3);
        std::vector<SceneCamera> rig;
        for (int k = 0; k < 2; ++k)
        {
            SceneCamera cam = grid_camera(k);
            const double yaw = k == 0 ? 0.0 : 45.0 * EIGEN_PI / 180.0;
            const Vec3 pos(1.6 * std::sin(yaw), 0.0, 1.6 * std::cos(yaw));
            cam.extrinsics = look_at_camera(pos, Vec3::Zero());
            rig.push_back(cam);
        }

        Rng rng(11);
        FaceParams params = FaceParams::zeros(model, {0, 1});
        for (int i = 0; i < params.alpha.size(); ++i)
            params.alpha[i] = rng.normal(0.0, 0.3);
        for (int i = 0; i < params.beta.size(); ++i)
            params.beta[i] = rng.normal(0.0, 0.3);
        for (int i = 0; i < params.delta.size(); ++i)
            params.delta[i] = rng.normal(0.0, 0.3);
        for (int id : {0, 1})
        {
            params.gamma[id][0] = params.gamma[id][9] = params.gamma[id][18] = 0.8;
            for (int i = 0; i < 27; ++i)
                params.gamma[id][i] += rng.normal(0.0, 0.05);
        }
        VertexOffsets offsets = VertexOffsets::zeros(model.vertex_count);
        for (int v = 0; v < model.vertex_count; ++v)
            for (int c = 0; c < 3; ++c)
                offsets.offsets(v, c) = rng.normal(0.0, 0.003);

        std::vector<RGBDFrame> views;
        for (const SceneCamera& cam : rig)
        {
            const RenderOutput rendered = render_view(model, params, offsets, cam);
            std::vector<Vec2> landmarks = project_landmarks(model, params, offsets, cam);
            for (Vec2& lm : landmarks)
                lm += Vec2(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5));
            RGBDFrame frame = frame_from_render(rendered, cam, landmarks);
            for (std::size_t pix = 0; pix < rendered.pixel_count(); ++pix)
            {
                if (!rendered.coverage[pix])
                    continue;
                for (int ch = 0; ch < 3; ++ch)
                {
                    const int shifted = static_cast<int>(frame.color.data[pix * 3 + ch]) + 45;
                    frame.color.data[pix * 3 + ch] =
                        static_cast<unsigned char>(std::min(shifted, 255));
                }
                const double bump_mm = rng.uniform(12.0, 32.0);
                frame.depth.data[pix] = static_cast<std::uint16_t>(
                    std::lround(rendered.depth[pix] * 1000.0 + bump_mm));
            }
            views.push_back(std::move(frame));
        }

        // Reference surface slightly off the eval surface keeps the edge term
        // active and smooth.
        FaceParams ref_params = params;
        ref_params.alpha.array() += 0.05;
        const MatN3 reference = assemble_face(model, ref_params, offsets).vertices;
        const MeshTopology topo = MeshTopology::build(*model.triangles, model.vertex_count);
        const FitConfig config;

        auto eval = [&](FitStage stage, const FaceParams& p, const VertexOffsets& r) {
            const MatN3* ref = stage == FitStage::Vertex ? &reference : nullptr;
            return total_loss(stage, model, rig, views, p, r, ref, topo, config, nullptr)
                .total;
        };

        auto fd_block = [&](FitStage stage, VecX FaceParams::* field, double h) {
            VecX fd = VecX::Zero((params.*field).size());
            for (int i = 0; i < fd.size(); ++i)
            {
                FaceParams plus = params;
                (plus.*field)[i] += h;
                FaceParams minus = params;
                (minus.*field)[i] -= h;
                fd[i] = (eval(stage, plus, offsets) - eval(stage, minus, offsets)) / (2 * h);
            }
            return fd;
        };

        for (const FitStage stage : {FitStage::Landmark, FitStage::Dmm, FitStage::Vertex})
        {
            CAPTURE(to_string(stage));
            ParamGrads grads = ParamGrads::zeros(model, {0, 1});
            const MatN3* ref = stage == FitStage::Vertex ? &reference : nullptr;
            total_loss(stage, model, rig, views, params, offsets, ref, topo, config, &grads);

            CHECK(block_rel_error(grads.d_alpha,
                                  fd_block(stage, &FaceParams::alpha, 1e-5)) <= 1e-4);
            CHECK(block_rel_error(grads.d_beta, fd_block(stage, &FaceParams::beta, 1e-5)) <=
                  1e-4);
            if (stage != FitStage::Landmark)
            {
                CHECK(block_rel_error(grads.d_delta,
                                      fd_block(stage, &FaceParams::delta, 1e-4)) <= 1e-4);
                for (int id : {0, 1})
                {
                    VecX fd = VecX::Zero(27);
                    for (int i = 0; i < 27; ++i)
                    {
                        FaceParams plus = params;
                        plus.gamma[id][i] += 1e-4;
                        FaceParams minus = params;
                        minus.gamma[id][i] -= 1e-4;
                        fd[i] = (eval(stage, plus, offsets) - eval(stage, minus, offsets)) /
                                2e-4;
                    }
                    CAPTURE(id);
                    CHECK(block_rel_error(grads.d_gamma.at(id), fd) <= 1e-4);
                }
            }

            // Spot-check a fixed spread of offset coordinates.
            VecX fd_off(12), an_off(12);
            int slot = 0;
            for (int v : {0, 17, 34, 51})
                for (int c = 0; c < 3; ++c)
                {
                    VertexOffsets plus = offsets;
                    plus.offsets(v, c) += 1e-5;
                    VertexOffsets minus = offsets;
                    minus.offsets(v, c) -= 1e-5;
                    fd_off[slot] = (eval(stage, params, plus) - eval(stage, params, minus)) /
                                   2e-5;
                    an_off[slot] = grads.d_offsets(v, c);
                    ++slot;
                }
            CHECK(block_rel_error(an_off, fd_off) <= 1e-4);
        }
    }

    TEST_CASE("landmark back-projection wires pixels, depth, and extrinsics")
    {
        SceneCamera cam = grid_camera(4);
        cam.intrinsics.fx = 100;
        cam.intrinsics.fy = 100;
        cam.extrinsics.translation = Vec3(0, 0, -1); // world z + 1 = camera z

        RGBDFrame frame;
        frame.camera_id = 4;
        frame.color = ImageRGB8(64, 64);
        frame.depth = ImageGray16(64, 64);
        frame.depth.at(10, 21) = 1500;
        frame.landmarks2d = {Vec2(10.4, 20.6), Vec2(-5.0, 3.0), Vec2(70.0, 10.0),
                             Vec2(15.0, 25.0)};

        const auto obs = landmark_world_observations(cam, frame);
        REQUIRE(obs.size() == 4);
        CHECK(obs[0].valid);
        const Vec3 expected((10 - 32.0) * 1.5 / 100.0, (21 - 32.0) * 1.5 / 100.0, 2.5);
        CHECK((obs[0].point - expected).norm() <= 1e-15);
        CHECK_FALSE(obs[1].valid); // off image, negative side
        CHECK_FALSE(obs[2].valid); // off image, positive side
        CHECK_FALSE(obs[3].valid); // depth hole
    }

    TEST_CASE("back-projected landmarks land near the true surface")
    {
        const MorphableModel model = synth_model(1, 150, 4, 4, 4);
        const fs::path dir = fresh_dir("fitting_lm_obs");
        SynthSceneConfig cfg;
        cfg.frames = 1;
        cfg.cameras = 2;
        cfg.seed = 9;
        const SceneInfo info = synth_scene(model, cfg, dir);
        const FaceSequence truth = load_sequence((dir / "ground_truth").string());

        for (const SceneCamera& cam : info.cameras)
        {
            const RGBDFrame frame = load_frame(dir, cam, 0);
            const auto obs = landmark_world_observations(cam, frame);
            REQUIRE(obs.size() == model.landmark_indices.size());
            int valid = 0;
            for (std::size_t i = 0; i < obs.size(); ++i)
            {
                if (!obs[i].valid)
                    continue;
                ++valid;
                const Vec3 gt = truth.vertices[0].row(model.landmark_indices[i]);
                CHECK((obs[i].point - gt).norm() <= 0.02);
            }
            CHECK(valid >= 5);
        }
    }

    TEST_CASE("first-frame fit improves through the stages")
    {
        // The scene is rendered from a 6+6 basis model but fitted with only the
        // leading 3+3 columns, so part of the true shape lies outside the model
        // span. That residual is exactly what the vertex stage exists to capture;
        // the coefficient stages can only reach the truncation floor.
        const MorphableModel full = synth_model(5, 120, 6, 6, 3);
        const fs::path dir = fresh_dir("fitting_first_frame");
        SynthSceneConfig scene_cfg;
        scene_cfg.frames = 1;
        scene_cfg.cameras = 2;
        scene_cfg.seed = 7;
        const SceneInfo info = synth_scene(full, scene_cfg, dir);
        const FaceSequence truth = load_sequence((dir / "ground_truth").string());

        MorphableModel model = full;
        model.identity_basis = full.identity_basis.leftCols(3).eval();
        model.expression_basis = full.expression_basis.leftCols(3).eval();
        model.validate();

        std::vector<RGBDFrame> views;
        for (const SceneCamera& cam : info.cameras)
        {
            views.push_back(load_frame(dir, cam, 0));
        }

        FitConfig config;
        config.iters_landmark = 100;
        config.iters_stage2 = 250;
        config.iters_stage3 = 250;
        const FitResult result = fit_first_frame(model, info.cameras, views, config);
        REQUIRE(result.reports.size() == 3);
        CHECK(result.reports[0].stage == "landmark");
        CHECK(result.reports[1].stage == "dmm");
        CHECK(result.reports[2].stage == "vertex");
        CHECK(result.reports[0].total_loss.size() == 100);
        CHECK(result.reports[1].total_loss.size() == 250);

        const VertexOffsets zero = VertexOffsets::zeros(model.vertex_count);
        const double err1 = mean_vertex_error(
            assemble_face(model, result.reports[0].final_params, zero).vertices,
            truth.vertices[0]);
        const double err2 = mean_vertex_error(
            assemble_face(model, result.reports[1].final_params, zero).vertices,
            truth.vertices[0]);
        const double err3 = mean_vertex_error(
            assemble_face(model, result.state.params, result.state.offsets).vertices,
            truth.vertices[0]);

        const Vec3 lo = truth.vertices[0].colwise().minCoeff().transpose();
        const Vec3 hi = truth.vertices[0].colwise().maxCoeff().transpose();
        const double diag = (hi - lo).norm();

        CHECK(err3 <= err2);
        CHECK(err2 <= err1);
        CHECK(err3 <= 0.01 * diag);

        // Two runs are bit-identical.
        const FitResult again = fit_first_frame(model, info.cameras, views, config);
        CHECK((again.state.params.alpha.array() == result.state.params.alpha.array()).all());
        CHECK((again.state.offsets.offsets.array() ==
               result.state.offsets.offsets.array())
                  .all());
    }

    TEST_CASE("refitting an identical frame barely moves the state")
    {
        const MorphableModel model = synth_model(5, 100, 3, 3, 3);
        const fs::path dir = fresh_dir("fitting_fixed_point");
        SynthSceneConfig scene_cfg;
        scene_cfg.frames = 1;
        scene_cfg.cameras = 2;
        scene_cfg.seed = 13;
        const SceneInfo info = synth_scene(model, scene_cfg, dir);

        std::vector<RGBDFrame> views;
        for (const SceneCamera& cam : info.cameras)
            views.push_back(load_frame(dir, cam, 0));

        const FitConfig config;
        const FitResult first = fit_first_frame(model, info.cameras, views, config);
        const FitState next = fit_next_frame(model, info.cameras, views, first.state, config);
        const FitState next2 = fit_next_frame(model, info.cameras, views, next, config);

        // Basis coefficients and per-vertex offsets overlap, so individual
        // parameters may trade against each other; the surface is what must
        // stay put. Bound: 0.5% of the unit-normalized face box diagonal.
        const MatN3 mesh0 =
            assemble_face(model, first.state.params, first.state.offsets).vertices;
        const MatN3 mesh1 = assemble_face(model, next.params, next.offsets).vertices;
        const MatN3 mesh2 = assemble_face(model, next2.params, next2.offsets).vertices;
        CHECK(mean_vertex_error(mesh0, mesh1) <= 5e-3);
        CHECK(mean_vertex_error(mesh1, mesh2) <= 5e-3);
        CHECK(mean_vertex_error(mesh0, mesh2) <= 5e-3);
        CHECK(next.iteration == first.state.iteration + config.iters_seq);
        CHECK(next2.iteration == next.iteration + config.iters_seq);
    }

    TEST_CASE("sequence reconstruction matches single-frame fitting on one frame")
    {
        const MorphableModel model = synth_model(5, 80, 3, 3, 3);
        const fs::path dir = fresh_dir("fitting_one_frame_seq");
        SynthSceneConfig scene_cfg;
        scene_cfg.frames = 1;
        scene_cfg.cameras = 2;
        scene_cfg.seed = 21;
        const SceneInfo info = synth_scene(model, scene_cfg, dir);

        FitConfig config;
        config.iters_landmark = 30;
        config.iters_stage2 = 40;
        config.iters_stage3 = 40;
        const SequenceResult seq = reconstruct_sequence(model, dir, config);

        std::vector<RGBDFrame> views;
        for (const SceneCamera& cam : info.cameras)
            views.push_back(load_frame(dir, cam, 0));
        const FitResult direct = fit_first_frame(model, info.cameras, views, config);

        REQUIRE(seq.sequence.frame_count() == 1);
        REQUIRE(seq.frames.size() == 1);
        CHECK(seq.frames[0].stages.size() == 3);
        const MatN3 expected =
            assemble_face(model, direct.state.params, direct.state.offsets).vertices;
        CHECK((seq.sequence.vertices[0].array() == expected.array()).all());
        CHECK((seq.sequence.offsets[0].array() ==
               direct.state.offsets.offsets.array())
                  .all());
    }

    TEST_CASE("sequence reconstruction reports, containers, and determinism")
    {
        const MorphableModel model = synth_model(2, 80, 3, 3, 3);
        const fs::path scene_dir = fresh_dir("fitting_seq_scene");
        SynthSceneConfig scene_cfg;
        scene_cfg.frames = 3;
        scene_cfg.cameras = 2;
        scene_cfg.seed = 17;
        synth_scene(model, scene_cfg, scene_dir);

        FitConfig config;
        config.iters_landmark = 8;
        config.iters_stage2 = 8;
        config.iters_stage3 = 8;
        config.iters_seq = 6;

        const fs::path out_a = fresh_dir("fitting_seq_out_a");
        const fs::path out_b = fresh_dir("fitting_seq_out_b");
        const SequenceResult a = reconstruct_sequence(model, scene_dir, config, out_a);
        const SequenceResult b = reconstruct_sequence(model, scene_dir, config, out_b);

        REQUIRE(a.frames.size() == 3);
        CHECK(a.frames[0].stages.size() == 3);
        CHECK(a.frames[1].stages.size() == 1);
        CHECK(a.frames[2].stages.size() == 1);
        CHECK(a.frames[1].stages[0].stage == "vertex");
        CHECK(a.frames[1].stages[0].total_loss.size() == 6);
        CHECK(a.sequence.frame_count() == 3);
        REQUIRE(a.sequence.params.size() == 3);
        REQUIRE(a.sequence.offsets.size() == 3);

        // Containers from the two runs are byte-identical.
        CHECK(slurp(out_a / "seq.bin") == slurp(out_b / "seq.bin"));
        CHECK(slurp(out_a / "seq.json") == slurp(out_b / "seq.json"));
        for (int f = 0; f < 3; ++f)
            CHECK((a.sequence.vertices[f].array() == b.sequence.vertices[f].array()).all());

        const FaceSequence reloaded = load_sequence(out_a.string());
        CHECK(reloaded.frame_count() == 3);
        CHECK(reloaded.vertex_count == model.vertex_count);

        // Loss-curve report exists and matches the in-memory run.
        std::ifstream in(out_a / "report.json");
        REQUIRE(in.good());
        nlohmann::json report = nlohmann::json::parse(in);
        REQUIRE(report.at("frames").size() == 3);
        CHECK(report["frames"][0]["stages"].size() == 3);
        CHECK(report["frames"][2]["stages"][0]["total_loss"].size() == 6);
        CHECK(report["frames"][0]["frame_index"] == 0);
    }

    TEST_CASE("missing frame files abort with the camera and frame named")
    {
        const MorphableModel model = synth_model(2, 80, 3, 3, 3);
        const fs::path scene_dir = fresh_dir("fitting_seq_missing");
        SynthSceneConfig scene_cfg;
        scene_cfg.frames = 3;
        scene_cfg.cameras = 2;
        scene_cfg.seed = 17;
        synth_scene(model, scene_cfg, scene_dir);
        fs::remove(scene_dir / "cam1" / "depth_000002.png");

        FitConfig config;
        config.iters_landmark = 2;
        config.iters_stage2 = 2;
        config.iters_stage3 = 2;
        config.iters_seq = 2;
        CHECK_THROWS_WITH_AS(reconstruct_sequence(model, scene_dir, config),
                             doctest::Contains("camera 1 frame 2"), IoError);
    }

    TEST_CASE("stage errors carry stage and iteration context")
    {
        GridFixture fx = grid_fixture();
        // No depth anywhere: every landmark observation is invalid.
        fx.views[0].depth = ImageGray16(64, 64);
        const FitConfig config;
        try
        {
            fit_first_frame(fx.model, fx.rig, fx.views, config);
            FAIL("expected a validation error");
        }
        catch (const ValidationError& e)
        {
            const std::string msg = e.what();
            CHECK(msg.find("stage landmark, iteration 0: ") != std::string::npos);
            CHECK(msg.find("no valid landmark observations") != std::string::npos);
        }
    }

    TEST_CASE("input and config validation")
    {
        const GridFixture fx = grid_fixture();
        const MeshTopology topo = MeshTopology::build(*fx.model.triangles, 9);
        const FaceParams params = FaceParams::zeros(fx.model, {0});
        const VertexOffsets offsets = VertexOffsets::zeros(9);

        FitConfig bad = FitConfig{};
        bad.lambda_d = -1.0;
        CHECK_THROWS_AS(bad.validate(), ValidationError);
        bad = FitConfig{};
        bad.lr_first = 0.0;
        CHECK_THROWS_AS(bad.validate(), ValidationError);
        bad = FitConfig{};
        bad.iters_stage2 = 0;
        CHECK_THROWS_AS(bad.validate(), ValidationError);
        bad = FitConfig{};
        bad.adam_beta1 = 1.0;
        CHECK_THROWS_AS(bad.validate(), ValidationError);
        bad = FitConfig{};
        bad.depth_trunc_m = 0.0;
        CHECK_THROWS_AS(bad.validate(), ValidationError);

        const FitConfig config;
        CHECK_THROWS_WITH_AS(total_loss(FitStage::Vertex, fx.model, fx.rig, fx.views, params,
                                        offsets, nullptr, topo, config, nullptr),
                             doctest::Contains("edge reference"), ValidationError);
        CHECK_THROWS_WITH_AS(total_loss(FitStage::Dmm, fx.model, fx.rig, {}, params, offsets,
                                        nullptr, topo, config, nullptr),
                             doctest::Contains("expected 1 views, got 0"), ValidationError);

        std::vector<RGBDFrame> wrong_id = fx.views;
        wrong_id[0].camera_id = 3;
        CHECK_THROWS_WITH_AS(total_loss(FitStage::Dmm, fx.model, fx.rig, wrong_id, params,
                                        offsets, nullptr, topo, config, nullptr),
                             doctest::Contains("camera id"), ValidationError);

        std::vector<RGBDFrame> few_landmarks = fx.views;
        few_landmarks[0].landmarks2d.resize(2);
        CHECK_THROWS_WITH_AS(fit_first_frame(fx.model, fx.rig, few_landmarks, config),
                             doctest::Contains("camera 0: expected 9 landmarks, got 2"),
                             ValidationError);

        FaceParams no_gamma = params;
        no_gamma.gamma.clear();
        CHECK_THROWS_WITH_AS(total_loss(FitStage::Dmm, fx.model, fx.rig, fx.views, no_gamma,
                                        offsets, nullptr, topo, config, nullptr),
                             doctest::Contains("no lighting coefficients for camera 0"),
                             ValidationError);
    }
}
