/*
 * facefit - multi-view RGB-D 4D face reconstruction in modern C++.
 *
 * File: src/gradcheck.cpp
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
#include "facefit/gradcheck.hpp"

#include "facefit/anim.hpp"
#include "facefit/error.hpp"
#include "facefit/fitting.hpp"
#include "facefit/losses.hpp"
#include "facefit/model.hpp"
#include "facefit/renderer.hpp"
#include "facefit/rng.hpp"
#include "facefit/synth_model.hpp"
#include "facefit/synth_scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

namespace facefit {

namespace {

constexpr double kTolerance = 1e-4;
constexpr double kGeomStep = 1e-5;  ///< vertex positions and basis coefficients
constexpr double kLightStep = 1e-4; ///< lighting and texture coefficients

/** Everything one instance needs: a camera arc around a seeded head, noisy
 *  observed views rendered from it, and a jittered evaluation point. */
struct Fixture
{
    MorphableModel model;
    std::vector<SceneCamera> rig;
    std::vector<RGBDFrame> views;
    FaceParams params;
    VertexOffsets offsets;
    MatN3 edge_reference;
    MeshTopology topo;
    FitConfig config;
    std::vector<int> camera_ids;
};

SceneCamera arc_camera(int id, double yaw_deg)
{
    SceneCamera cam;
    cam.id = id;
    cam.intrinsics.fx = 128;
    cam.intrinsics.fy = 128;
    cam.intrinsics.cx = 32;
    cam.intrinsics.cy = 32;
    cam.intrinsics.width = 64;
    cam.intrinsics.height = 64;
    const double yaw = yaw_deg * EIGEN_PI / 180.0;
    cam.extrinsics = look_at_camera(Vec3(1.6 * std::sin(yaw), 0.0, 1.6 * std::cos(yaw)),
                                    Vec3::Zero());
    return cam;
}

MatN3 world_to_camera(const MatN3& world, const RigidTransform& extrinsics)
{
    MatN3 out(world.rows(), 3);
    for (Eigen::Index v = 0; v < world.rows(); ++v)
        out.row(v) = extrinsics.apply(world.row(v)).transpose();
    return out;
}

RenderOutput render_view(const MorphableModel& model, const FaceParams& params,
                         const VertexOffsets& offsets, const SceneCamera& camera)
{
    const Mesh face = assemble_face(model, params, offsets);
    Mesh mesh;
    mesh.vertices = world_to_camera(face.vertices, camera.extrinsics);
    mesh.triangles = model.triangles;
    mesh.albedo = sh_shade(face_albedo(model, params.delta),
                           vertex_normals(mesh.vertices, *model.triangles),
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
        out.push_back(project(camera.intrinsics,
                              camera.extrinsics.apply(face.vertices.row(idx))));
    return out;
}

/** Quantizes a render into an observed frame, then shifts color and depth so
 *  every residual sits a safe distance from the data terms' kinks. */
RGBDFrame observed_frame(const RenderOutput& rendered, const SceneCamera& camera,
                         const std::vector<Vec2>& landmarks, Rng& rng)
{
    RGBDFrame frame;
    frame.camera_id = camera.id;
    frame.color = ImageRGB8(rendered.width, rendered.height);
    frame.depth = ImageGray16(rendered.width, rendered.height);
    for (std::size_t pix = 0; pix < rendered.pixel_count(); ++pix)
    {
        if (!rendered.coverage[pix])
            continue;
        for (int ch = 0; ch < 3; ++ch)
        {
            const double c = std::clamp(rendered.color[pix * 3 + ch], 0.0, 1.0);
            const int shifted = static_cast<int>(std::lround(c * 255.0)) + 45;
            frame.color.data[pix * 3 + ch] =
                static_cast<unsigned char>(std::min(shifted, 255));
        }
        const double bump_mm = rng.uniform(12.0, 32.0);
        frame.depth.data[pix] =
            static_cast<std::uint16_t>(std::lround(rendered.depth[pix] * 1000.0 + bump_mm));
    }
    frame.landmarks2d = landmarks;
    for (Vec2& lm : frame.landmarks2d)
        lm += Vec2(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5));
    return frame;
}

Fixture build_fixture(std::uint64_t seed)
{
    Fixture fx;
    fx.model = synth_model(seed, 200, 3, 3, 3);
    fx.camera_ids = {0, 1, 2};
    fx.rig = {arc_camera(0, 0.0), arc_camera(1, 45.0), arc_camera(2, -45.0)};

    Rng rng(seed + 211);
    fx.params = FaceParams::zeros(fx.model, fx.camera_ids);
    for (int i = 0; i < fx.params.alpha.size(); ++i)
        fx.params.alpha[i] = rng.normal(0.0, 0.3);
    for (int i = 0; i < fx.params.beta.size(); ++i)
        fx.params.beta[i] = rng.normal(0.0, 0.3);
    for (int i = 0; i < fx.params.delta.size(); ++i)
        fx.params.delta[i] = rng.normal(0.0, 0.3);
    for (int id : fx.camera_ids)
    {
        VecX& gamma = fx.params.gamma.at(id);
        gamma[0] = gamma[9] = gamma[18] = 0.8;
        for (int i = 0; i < gamma.size(); ++i)
            gamma[i] += rng.normal(0.0, 0.05);
    }
    fx.offsets = VertexOffsets::zeros(fx.model.vertex_count);
    for (int v = 0; v < fx.model.vertex_count; ++v)
        for (int c = 0; c < 3; ++c)
            fx.offsets.offsets(v, c) = rng.normal(0.0, 0.003);

    for (const SceneCamera& cam : fx.rig)
        fx.views.push_back(observed_frame(render_view(fx.model, fx.params, fx.offsets, cam),
                                          cam,
                                          project_landmarks(fx.model, fx.params, fx.offsets,
                                                            cam),
                                          rng));

    // A reference surface slightly off the evaluation surface keeps the
    // edge-length term active and smooth.
    FaceParams ref_params = fx.params;
    ref_params.alpha.array() += 0.05;
    fx.edge_reference = assemble_face(fx.model, ref_params, fx.offsets).vertices;
    fx.topo = MeshTopology::build(*fx.model.triangles, fx.model.vertex_count);
    return fx;
}

double rel_error(const VecX& analytic, const VecX& fd)
{
    const double scale =
        std::max({analytic.cwiseAbs().maxCoeff(), fd.cwiseAbs().maxCoeff(), 1e-12});
    return (analytic - fd).cwiseAbs().maxCoeff() / scale;
}

void push_entry(GradCheckReport& report, std::string term, std::string block,
                const VecX& analytic, const VecX& fd)
{
    GradCheckEntry entry;
    entry.term = std::move(term);
    entry.block = std::move(block);
    entry.rel_error = rel_error(analytic, fd);
    entry.tolerance = kTolerance;
    entry.passed = entry.rel_error <= entry.tolerance;
    report.entries.push_back(std::move(entry));
}

double central_fd(const std::function<double(double)>& f, double h)
{
    return (f(h) - f(-h)) / (2.0 * h);
}

/**
 * Difference quotient for objectives that re-rasterize per evaluation. They
 * are smooth except where a silhouette edge crosses a pixel sample; a
 * crossing inside the stencil poisons the quotient by jump/2h. Clean stencils
 * at widths h and h/8 agree to ~1e-6 relative while a poisoned pair differs
 * by orders of magnitude, so shrinking until two widths agree deterministically
 * lands on smooth ground.
 */
double robust_fd(const std::function<double(double)>& f, double h)
{
    double coarse = central_fd(f, h);
    for (int level = 0; level < 2; ++level)
    {
        const double fine = central_fd(f, h / 8.0);
        const double scale = std::max({std::abs(coarse), std::abs(fine), 1.0});
        if (std::abs(coarse - fine) <= 1e-6 * scale)
            return coarse;
        h /= 8.0;
        coarse = fine;
    }
    return coarse;
}

/**
 * Rows of a per-vertex field worth probing: four anchors spread across the
 * vertex range (they catch gradient paths the analytic side might have
 * dropped) plus the eight rows where the analytic gradient is largest.
 */
std::vector<int> probe_rows(const MatN3& analytic_field)
{
    const int n = static_cast<int>(analytic_field.rows());
    std::vector<int> rows = {0, n / 3, 2 * n / 3, n - 1};
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return analytic_field.row(a).squaredNorm() > analytic_field.row(b).squaredNorm();
    });
    for (int i = 0; i < n && rows.size() < 12; ++i)
        if (std::find(rows.begin(), rows.end(), order[i]) == rows.end())
            rows.push_back(order[i]);
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    return rows;
}

/** Compares a per-vertex analytic field against finite differences of
 *  `shifted(v, c, delta)` on the probe rows. */
void check_rows(GradCheckReport& report, std::string term, std::string block,
                const MatN3& analytic, const std::vector<int>& rows, double h, bool robust,
                const std::function<double(int, int, double)>& shifted)
{
    VecX an(static_cast<Eigen::Index>(rows.size()) * 3);
    VecX fd(an.size());
    Eigen::Index slot = 0;
    for (int v : rows)
        for (int c = 0; c < 3; ++c)
        {
            an[slot] = analytic(v, c);
            const auto f = [&](double d) { return shifted(v, c, d); };
            fd[slot] = robust ? robust_fd(f, h) : central_fd(f, h);
            ++slot;
        }
    push_entry(report, std::move(term), std::move(block), an, fd);
}

void check_landmark3d(const Fixture& fx, Rng& rng, GradCheckReport& report)
{
    const MatN3 vertices = assemble_face(fx.model, fx.params, fx.offsets).vertices;
    std::vector<LandmarkObservation> observed;
    for (int idx : fx.model.landmark_indices)
    {
        LandmarkObservation obs;
        obs.point = vertices.row(idx).transpose() +
                    Vec3(rng.normal(0.0, 0.02), rng.normal(0.0, 0.02), rng.normal(0.0, 0.02));
        obs.valid = true;
        observed.push_back(obs);
    }
    observed[observed.size() / 2].valid = false; // the invalid-skip path must carry no gradient

    MatN3 analytic = MatN3::Zero(vertices.rows(), 3);
    loss_landmark3d_backward(vertices, fx.model.landmark_indices, observed, 1.0, analytic);

    check_rows(report, "lm3d", "vertices", analytic, probe_rows(analytic), kGeomStep, false,
               [&](int v, int c, double d) {
                   MatN3 shifted = vertices;
                   shifted(v, c) += d;
                   return loss_landmark3d(shifted, fx.model.landmark_indices, observed);
               });
}

void check_landmark2d(const Fixture& fx, Rng& rng, GradCheckReport& report)
{
    const SceneCamera& cam = fx.rig[1]; // oblique pose exercises the rotation chain
    const MatN3 vertices = assemble_face(fx.model, fx.params, fx.offsets).vertices;
    std::vector<Vec2> observed = project_landmarks(fx.model, fx.params, fx.offsets, cam);
    for (Vec2& lm : observed)
        lm += Vec2(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5));

    MatN3 analytic = MatN3::Zero(vertices.rows(), 3);
    loss_landmark2d_backward(vertices, fx.model.landmark_indices, cam.intrinsics,
                             cam.extrinsics, observed, 1.0, analytic);

    check_rows(report, "lm2d", "vertices", analytic, probe_rows(analytic), kGeomStep, false,
               [&](int v, int c, double d) {
                   MatN3 shifted = vertices;
                   shifted(v, c) += d;
                   return loss_landmark2d(shifted, fx.model.landmark_indices, cam.intrinsics,
                                          cam.extrinsics, observed);
               });
}

void check_prior(const Fixture& fx, GradCheckReport& report)
{
    VecX d_alpha = VecX::Zero(fx.params.alpha.size());
    VecX d_beta = VecX::Zero(fx.params.beta.size());
    VecX d_delta = VecX::Zero(fx.params.delta.size());
    loss_prior_backward(fx.params, 1.0, d_alpha, d_beta, d_delta);

    const auto fd_block = [&](VecX FaceParams::* field) {
        VecX fd((fx.params.*field).size());
        for (Eigen::Index i = 0; i < fd.size(); ++i)
        {
            const auto f = [&](double d) {
                FaceParams p = fx.params;
                (p.*field)[i] += d;
                return loss_prior(p);
            };
            fd[i] = central_fd(f, kGeomStep);
        }
        return fd;
    };
    push_entry(report, "prior", "alpha", d_alpha, fd_block(&FaceParams::alpha));
    push_entry(report, "prior", "beta", d_beta, fd_block(&FaceParams::beta));
    push_entry(report, "prior", "delta", d_delta, fd_block(&FaceParams::delta));
}

void check_edge(const Fixture& fx, GradCheckReport& report)
{
    const MatN3 deformed = assemble_face(fx.model, fx.params, fx.offsets).vertices;
    MatN3 analytic = MatN3::Zero(deformed.rows(), 3);
    loss_edge_backward(deformed, fx.edge_reference, fx.topo, 1.0, analytic);

    check_rows(report, "edge", "vertices", analytic, probe_rows(analytic), kGeomStep, false,
               [&](int v, int c, double d) {
                   MatN3 shifted = deformed;
                   shifted(v, c) += d;
                   return loss_edge(shifted, fx.edge_reference, fx.topo);
               });
}

void check_laplacian(const Fixture& fx, GradCheckReport& report)
{
    const MatN3& field = fx.offsets.offsets;
    MatN3 analytic = MatN3::Zero(field.rows(), 3);
    loss_laplacian_backward(field, fx.topo, 1.0, analytic);

    check_rows(report, "laplacian", "offsets", analytic, probe_rows(analytic), kGeomStep,
               false, [&](int v, int c, double d) {
                   MatN3 shifted = field;
                   shifted(v, c) += d;
                   return loss_laplacian(shifted, fx.topo);
               });
}

void check_offset(const Fixture& fx, GradCheckReport& report)
{
    const MatN3& field = fx.offsets.offsets;
    MatN3 analytic = MatN3::Zero(field.rows(), 3);
    loss_offset_backward(field, 1.0, analytic);

    check_rows(report, "offset", "offsets", analytic, probe_rows(analytic), kGeomStep, false,
               [&](int v, int c, double d) {
                   MatN3 shifted = field;
                   shifted(v, c) += d;
                   return loss_offset(shifted);
               });
}

/**
 * The color and depth data terms, differentiated through the full render
 * chain (camera transform, vertex normals, spherical-harmonics shading,
 * frozen-visibility rasterization) with respect to world vertex positions.
 * Freezing visibility at the evaluation point's fragments makes the chain
 * smooth, which is exactly the function the backward pass differentiates.
 */
void check_render_terms(const Fixture& fx, GradCheckReport& report)
{
    const SceneCamera& cam = fx.rig[0];
    const MatN3 world = assemble_face(fx.model, fx.params, fx.offsets).vertices;
    const MatN3 albedo = face_albedo(fx.model, fx.params.delta);
    const ShadingParams shading{fx.params.gamma.at(cam.id)};
    const TriangleList& tris = *fx.model.triangles;

    const MatN3 cam_verts = world_to_camera(world, cam.extrinsics);
    const MatN3 normals = vertex_normals(cam_verts, tris);
    Mesh mesh;
    mesh.vertices = cam_verts;
    mesh.triangles = fx.model.triangles;
    mesh.albedo = sh_shade(albedo, normals, shading);
    const RenderOutput ref = rasterize(mesh, cam.intrinsics);

    const auto frozen_losses = [&](const MatN3& shifted_world, double& rgb, double& depth) {
        Mesh m;
        m.vertices = world_to_camera(shifted_world, cam.extrinsics);
        m.triangles = fx.model.triangles;
        m.albedo = sh_shade(albedo, vertex_normals(m.vertices, tris), shading);
        RenderOutput mod = ref;
        render_frozen(m, cam.intrinsics, ref, mod.color, mod.depth);
        rgb = loss_rgb(mod, fx.views[0].color);
        depth = loss_depth(mod, fx.views[0].depth, fx.config.depth_trunc_m);
    };

    const auto to_world_frame = [&](const MatN3& d_cam) {
        MatN3 d_world(d_cam.rows(), 3);
        for (Eigen::Index v = 0; v < d_cam.rows(); ++v)
            d_world.row(v) = d_cam.row(v) * cam.extrinsics.rotation;
        return d_world;
    };

    // Color: gradients flow through both the interpolated attributes (via
    // shading and normals) and the projected positions.
    std::vector<double> d_color(ref.pixel_count() * 3, 0.0);
    loss_rgb_backward(ref, fx.views[0].color, 1.0, d_color);
    const RenderGrads rgb_grads = render_backward(mesh, cam.intrinsics, ref, d_color, {});
    const ShadeGrads shade_grads =
        sh_shade_backward(albedo, normals, shading, rgb_grads.d_attributes);
    const MatN3 d_world_rgb = to_world_frame(
        rgb_grads.d_vertices + vertex_normals_backward(cam_verts, tris, shade_grads.d_normals));

    // Frozen visibility leaves no jumps, but a grazing triangle puts a pole
    // of the perspective interpolation near the evaluation point; the
    // shrinking stencil absorbs that curvature.
    check_rows(report, "rgb", "vertices", d_world_rgb, probe_rows(d_world_rgb), kGeomStep,
               true, [&](int v, int c, double d) {
                   MatN3 shifted = world;
                   shifted(v, c) += d;
                   double rgb = 0.0, depth = 0.0;
                   frozen_losses(shifted, rgb, depth);
                   return rgb;
               });

    // Depth: gradients flow through the projected positions only.
    std::vector<double> d_depth(ref.pixel_count(), 0.0);
    loss_depth_backward(ref, fx.views[0].depth, fx.config.depth_trunc_m, 1.0, d_depth);
    const RenderGrads depth_grads = render_backward(mesh, cam.intrinsics, ref, {}, d_depth);
    const MatN3 d_world_depth = to_world_frame(depth_grads.d_vertices);

    check_rows(report, "depth", "vertices", d_world_depth, probe_rows(d_world_depth),
               kGeomStep, true, [&](int v, int c, double d) {
                   MatN3 shifted = world;
                   shifted(v, c) += d;
                   double rgb = 0.0, depth = 0.0;
                   frozen_losses(shifted, rgb, depth);
                   return depth;
               });
}

MatX random_weights(Rng& rng, int rows, int cols)
{
    MatX weights(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
        {
            const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
            weights(i, j) = sign * rng.uniform(0.2, 1.5);
        }
    return weights;
}

void check_sparsity(Rng& rng, GradCheckReport& report)
{
    const MatX weights = random_weights(rng, 4, 6);
    const SparsityResult result = sparsity_reg(weights);

    VecX an(weights.size()), fd(weights.size());
    Eigen::Index slot = 0;
    for (Eigen::Index i = 0; i < weights.rows(); ++i)
        for (Eigen::Index j = 0; j < weights.cols(); ++j)
        {
            an[slot] = result.gradient(i, j);
            fd[slot] = central_fd(
                [&](double d) {
                    MatX shifted = weights;
                    shifted(i, j) += d;
                    return sparsity_reg(shifted).value;
                },
                1e-6);
            ++slot;
        }
    push_entry(report, "sparsity", "weights", an, fd);
}

void check_anim_total(Rng& rng, GradCheckReport& report)
{
    // beta is checked at 0.1 rather than the training default 1e-6: the
    // regularizer's finite-difference increment must rise above the rounding
    // noise of the O(1) data term for the quotient to mean anything.
    const int frames = 3, verts = 40;
    const double beta = 0.1;
    std::vector<MatN3> gt(frames), pred(frames);
    for (int t = 0; t < frames; ++t)
    {
        gt[t].resize(verts, 3);
        pred[t].resize(verts, 3);
        for (int v = 0; v < verts; ++v)
            for (int c = 0; c < 3; ++c)
            {
                gt[t](v, c) = rng.normal(0.0, 0.1);
                pred[t](v, c) = gt[t](v, c) + rng.normal(0.0, 0.05);
            }
    }
    const MatX weights = random_weights(rng, 4, 6);

    for (const bool squared : {false, true})
    {
        std::vector<MatN3> d_pred(frames, MatN3::Zero(verts, 3));
        MatX d_weights = MatX::Zero(weights.rows(), weights.cols());
        anim_total_loss_backward(pred, gt, weights, beta, squared, 1.0, d_pred, d_weights);

        VecX an_pred(frames * verts * 3), fd_pred(frames * verts * 3);
        Eigen::Index slot = 0;
        for (int t = 0; t < frames; ++t)
            for (int v = 0; v < verts; ++v)
                for (int c = 0; c < 3; ++c)
                {
                    an_pred[slot] = d_pred[t](v, c);
                    fd_pred[slot] = central_fd(
                        [&](double d) {
                            std::vector<MatN3> shifted = pred;
                            shifted[t](v, c) += d;
                            return anim_total_loss(shifted, gt, weights, beta, squared);
                        },
                        kGeomStep);
                    ++slot;
                }
        const std::string term = squared ? "anim_total_sq" : "anim_total";
        push_entry(report, term, "pred", an_pred, fd_pred);

        if (!squared)
        {
            VecX an_w(weights.size()), fd_w(weights.size());
            slot = 0;
            for (Eigen::Index i = 0; i < weights.rows(); ++i)
                for (Eigen::Index j = 0; j < weights.cols(); ++j)
                {
                    an_w[slot] = d_weights(i, j);
                    fd_w[slot] = central_fd(
                        [&](double d) {
                            MatX shifted = weights;
                            shifted(i, j) += d;
                            return anim_total_loss(pred, gt, shifted, beta, squared);
                        },
                        1e-6);
                    ++slot;
                }
            push_entry(report, term, "weights", an_w, fd_w);
        }
    }
}

void check_stage(const Fixture& fx, FitStage stage, GradCheckReport& report)
{
    const MatN3* ref = stage == FitStage::Vertex ? &fx.edge_reference : nullptr;
    ParamGrads grads = ParamGrads::zeros(fx.model, fx.camera_ids);
    total_loss(stage, fx.model, fx.rig, fx.views, fx.params, fx.offsets, ref, fx.topo,
               fx.config, &grads);
    const std::string term = "stage " + to_string(stage);

    const auto eval = [&](const FaceParams& p, const VertexOffsets& r) {
        return total_loss(stage, fx.model, fx.rig, fx.views, p, r, ref, fx.topo, fx.config,
                          nullptr)
            .total;
    };

    // Basis coefficients move geometry, so their quotients get the
    // silhouette-aware stencil.
    const auto fd_coeff = [&](VecX FaceParams::* field, double h, bool robust) {
        VecX fd((fx.params.*field).size());
        for (Eigen::Index i = 0; i < fd.size(); ++i)
        {
            const auto f = [&](double d) {
                FaceParams p = fx.params;
                (p.*field)[i] += d;
                return eval(p, fx.offsets);
            };
            fd[i] = robust ? robust_fd(f, h) : central_fd(f, h);
        }
        return fd;
    };

    push_entry(report, term, "alpha", grads.d_alpha,
               fd_coeff(&FaceParams::alpha, kGeomStep, true));
    push_entry(report, term, "beta", grads.d_beta,
               fd_coeff(&FaceParams::beta, kGeomStep, true));

    // Texture and lighting shape only colors, never coverage, and the
    // landmark stage ignores them entirely.
    if (stage != FitStage::Landmark)
    {
        push_entry(report, term, "delta", grads.d_delta,
                   fd_coeff(&FaceParams::delta, kLightStep, false));
        for (int id : fx.camera_ids)
        {
            VecX fd(27);
            for (int i = 0; i < 27; ++i)
                fd[i] = central_fd(
                    [&](double d) {
                        FaceParams p = fx.params;
                        p.gamma.at(id)[i] += d;
                        return eval(p, fx.offsets);
                    },
                    kLightStep);
            push_entry(report, term, "gamma:" + std::to_string(id), grads.d_gamma.at(id), fd);
        }
    }

    check_rows(report, term, "offsets", grads.d_offsets, probe_rows(grads.d_offsets),
               kGeomStep, stage != FitStage::Landmark, [&](int v, int c, double d) {
                   VertexOffsets r = fx.offsets;
                   r.offsets(v, c) += d;
                   return eval(fx.params, r);
               });
}

} // namespace

bool GradCheckReport::all_passed() const
{
    return std::all_of(entries.begin(), entries.end(),
                       [](const GradCheckEntry& e) { return e.passed; });
}

double GradCheckReport::worst_rel_error() const
{
    double worst = 0.0;
    for (const GradCheckEntry& entry : entries)
        worst = std::max(worst, entry.rel_error);
    return worst;
}

GradCheckReport check_gradients(std::uint64_t seed)
{
    const Fixture fx = build_fixture(seed);
    Rng rng(seed + 4877);

    GradCheckReport report;
    report.seed = seed;
    check_landmark3d(fx, rng, report);
    check_landmark2d(fx, rng, report);
    check_prior(fx, report);
    check_edge(fx, report);
    check_laplacian(fx, report);
    check_offset(fx, report);
    check_render_terms(fx, report);
    check_sparsity(rng, report);
    check_anim_total(rng, report);
    for (const FitStage stage : {FitStage::Landmark, FitStage::Dmm, FitStage::Vertex})
        check_stage(fx, stage, report);
    return report;
}

std::vector<GradCheckReport> check_gradient_suite(std::uint64_t base_seed, int instances)
{
    if (instances < 1)
        throw ValidationError("gradient check: instances must be >= 1, got " +
                              std::to_string(instances));
    std::vector<GradCheckReport> reports;
    reports.reserve(static_cast<std::size_t>(instances));
    for (int k = 0; k < instances; ++k)
        reports.push_back(check_gradients(base_seed + static_cast<std::uint64_t>(k)));
    return reports;
}

} // namespace facefit
