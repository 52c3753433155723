/*
 * facefit - multi-view RGB-D 4D face reconstruction in modern C++.
 *
 * File: src/fitting.cpp
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
#include "facefit/fitting.hpp"

#include "facefit/error.hpp"
#include "facefit/renderer.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <utility>

namespace facefit {

using nlohmann::json;

std::string to_string(FitStage stage)
{
    switch (stage)
    {
    case FitStage::Landmark: return "landmark";
    case FitStage::Dmm: return "dmm";
    case FitStage::Vertex: return "vertex";
    }
    throw ValidationError("unknown fit stage");
}

void FitConfig::validate() const
{
    auto require = [](bool ok, const char* what) {
        if (!ok)
            throw ValidationError(std::string("fit config: ") + what);
    };
    require(lambda_d >= 0 && lambda_lm >= 0 && lambda_p >= 0 && lambda_e >= 0 &&
                lambda_lap >= 0 && lambda_op >= 0,
            "loss weights must be non-negative");
    require(lr_first > 0 && lr_seq > 0, "learning rates must be positive");
    require(iters_landmark >= 1 && iters_stage2 >= 1 && iters_stage3 >= 1 && iters_seq >= 1,
            "iteration counts must be at least 1");
    require(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1,
            "adam betas must lie in [0, 1)");
    require(adam_eps > 0, "adam epsilon must be positive");
    require(depth_trunc_m > 0, "depth truncation must be positive");
}

ParamGrads ParamGrads::zeros(const MorphableModel& model, const std::vector<int>& camera_ids)
{
    ParamGrads g;
    g.d_alpha = VecX::Zero(model.k_id());
    g.d_beta = VecX::Zero(model.k_exp());
    g.d_delta = VecX::Zero(model.k_tex());
    for (int id : camera_ids)
        g.d_gamma[id] = VecX::Zero(27);
    g.d_offsets = MatN3::Zero(model.vertex_count, 3);
    return g;
}

std::vector<LandmarkObservation> landmark_world_observations(const SceneCamera& camera,
                                                             const RGBDFrame& frame)
{
    const CameraIntrinsics& cam = camera.intrinsics;
    const RigidTransform to_world = camera.extrinsics.inverse();
    std::vector<LandmarkObservation> out(frame.landmarks2d.size());
    for (std::size_t i = 0; i < frame.landmarks2d.size(); ++i)
    {
        const long px = std::lround(frame.landmarks2d[i].x());
        const long py = std::lround(frame.landmarks2d[i].y());
        if (px < 0 || px >= cam.width || py < 0 || py >= cam.height)
            continue;
        const std::uint16_t d =
            frame.depth.at(static_cast<int>(px), static_cast<int>(py));
        if (d == 0)
            continue;
        const double z = d / 1000.0;
        const Vec3 p_cam((px - cam.cx) * z / cam.fx, (py - cam.cy) * z / cam.fy, z);
        out[i].point = to_world.apply(p_cam);
        out[i].valid = true;
    }
    return out;
}

namespace {

void check_views(const std::vector<SceneCamera>& rig, const std::vector<RGBDFrame>& views)
{
    if (rig.empty())
        throw ValidationError("total loss: empty camera rig");
    if (views.size() != rig.size())
        throw ValidationError("total loss: expected " + std::to_string(rig.size()) +
                              " views, got " + std::to_string(views.size()));
    for (std::size_t i = 0; i < rig.size(); ++i)
    {
        if (views[i].camera_id != rig[i].id)
            throw ValidationError("total loss: view " + std::to_string(i) +
                                  " has camera id " + std::to_string(views[i].camera_id) +
                                  ", rig expects " + std::to_string(rig[i].id));
    }
}

/** World-vertex gradients of the image terms for one camera view. */
void image_terms_backward(const MorphableModel& model, const MatN3& world_vertices,
                          const MatN3& albedo, const SceneCamera& camera,
                          const RGBDFrame& view, const VecX& gamma,
                          const RenderOutput& rendered, const FitConfig& config,
                          MatN3& d_world, MatN3& d_albedo, VecX& d_gamma)
{
    const int n = static_cast<int>(world_vertices.rows());
    MatN3 cam_vertices(n, 3);
    for (int v = 0; v < n; ++v)
        cam_vertices.row(v) = camera.extrinsics.apply(world_vertices.row(v)).transpose();
    const MatN3 normals = vertex_normals(cam_vertices, *model.triangles);

    std::vector<double> d_color;
    std::vector<double> d_depth;
    loss_rgb_backward(rendered, view.color, 1.0, d_color);
    loss_depth_backward(rendered, view.depth, config.depth_trunc_m, config.lambda_d, d_depth);

    Mesh mesh;
    mesh.vertices = cam_vertices;
    mesh.triangles = model.triangles;
    mesh.albedo = sh_shade(albedo, normals, ShadingParams{gamma});
    const RenderGrads rg = render_backward(mesh, camera.intrinsics, rendered, d_color, d_depth);

    const ShadeGrads sg = sh_shade_backward(albedo, normals, ShadingParams{gamma},
                                            rg.d_attributes);
    d_albedo += sg.d_albedo;
    d_gamma += sg.d_gamma;

    const MatN3 d_cam = rg.d_vertices +
                        vertex_normals_backward(cam_vertices, *model.triangles, sg.d_normals);
    // v_cam = R v_world + t, so row-form gradients chain as g_world = g_cam * R.
    d_world += d_cam * camera.extrinsics.rotation;

    loss_landmark2d_backward(world_vertices, model.landmark_indices, camera.intrinsics,
                             camera.extrinsics, view.landmarks2d, config.lambda_lm, d_world);
}

} // namespace

StageObjective total_loss(FitStage stage, const MorphableModel& model,
                          const std::vector<SceneCamera>& rig,
                          const std::vector<RGBDFrame>& views, const FaceParams& params,
                          const VertexOffsets& offsets, const MatN3* edge_reference,
                          const MeshTopology& topo, const FitConfig& config,
                          ParamGrads* grads)
{
    check_views(rig, views);
    if (stage == FitStage::Vertex && edge_reference == nullptr)
        throw ValidationError("total loss: vertex stage requires an edge reference mesh");

    const Mesh face = assemble_face(model, params, offsets);
    const MatN3& world = face.vertices;

    StageObjective obj;
    MatN3 d_world = MatN3::Zero(model.vertex_count, 3);

    if (stage == FitStage::Landmark)
    {
        // One mean over the observations of every camera, so each extra view
        // adds evidence instead of reweighting the term.
        std::vector<int> pooled_indices;
        std::vector<LandmarkObservation> pooled_obs;
        for (std::size_t i = 0; i < rig.size(); ++i)
        {
            const auto obs = landmark_world_observations(rig[i], views[i]);
            pooled_obs.insert(pooled_obs.end(), obs.begin(), obs.end());
            pooled_indices.insert(pooled_indices.end(), model.landmark_indices.begin(),
                                  model.landmark_indices.end());
        }
        const double lm3d = loss_landmark3d(world, pooled_indices, pooled_obs);
        obj.terms["lm3d"] = lm3d;
        obj.total += lm3d;
        if (grads)
            loss_landmark3d_backward(world, pooled_indices, pooled_obs, 1.0, d_world);
    }
    else
    {
        const MatN3 albedo = face_albedo(model, params.delta);
        MatN3 d_albedo = MatN3::Zero(model.vertex_count, 3);
        double rgb_sum = 0.0, depth_sum = 0.0, lm2d_sum = 0.0;
        for (std::size_t i = 0; i < rig.size(); ++i)
        {
            const auto it = params.gamma.find(rig[i].id);
            if (it == params.gamma.end())
                throw ValidationError("total loss: no lighting coefficients for camera " +
                                      std::to_string(rig[i].id));
            const VecX& gamma = it->second;

            const int n = model.vertex_count;
            MatN3 cam_vertices(n, 3);
            for (int v = 0; v < n; ++v)
                cam_vertices.row(v) =
                    rig[i].extrinsics.apply(world.row(v)).transpose();
            Mesh mesh;
            mesh.vertices = cam_vertices;
            mesh.triangles = model.triangles;
            mesh.albedo = sh_shade(albedo, vertex_normals(cam_vertices, *model.triangles),
                                   ShadingParams{gamma});
            const RenderOutput rendered = rasterize(mesh, rig[i].intrinsics);

            rgb_sum += loss_rgb(rendered, views[i].color);
            depth_sum += loss_depth(rendered, views[i].depth, config.depth_trunc_m);
            lm2d_sum += loss_landmark2d(world, model.landmark_indices, rig[i].intrinsics,
                                        rig[i].extrinsics, views[i].landmarks2d);
            if (grads)
                image_terms_backward(model, world, albedo, rig[i], views[i], gamma, rendered,
                                     config, d_world, d_albedo, grads->d_gamma[rig[i].id]);
        }
        obj.terms["rgb"] = rgb_sum;
        obj.terms["depth"] = depth_sum;
        obj.terms["lm2d"] = lm2d_sum;
        obj.total += rgb_sum + config.lambda_d * depth_sum + config.lambda_lm * lm2d_sum;
        if (grads)
            grads->d_delta += face_albedo_backward(model, params.delta, d_albedo);
    }

    const double prior = loss_prior(params);
    obj.terms["prior"] = prior;
    obj.total += config.lambda_p * prior;
    if (grads)
        loss_prior_backward(params, config.lambda_p, grads->d_alpha, grads->d_beta,
                            grads->d_delta);

    if (stage == FitStage::Vertex)
    {
        const double edge = loss_edge(world, *edge_reference, topo);
        const double lap = loss_laplacian(offsets.offsets, topo);
        const double off = loss_offset(offsets.offsets);
        obj.terms["edge"] = edge;
        obj.terms["laplacian"] = lap;
        obj.terms["offset"] = off;
        obj.total += config.lambda_e * edge + config.lambda_lap * lap + config.lambda_op * off;
        if (grads)
        {
            loss_edge_backward(world, *edge_reference, topo, config.lambda_e, d_world);
            loss_laplacian_backward(offsets.offsets, topo, config.lambda_lap,
                                    grads->d_offsets);
            loss_offset_backward(offsets.offsets, config.lambda_op, grads->d_offsets);
        }
    }

    if (grads)
    {
        grads->d_alpha += basis_coefficient_gradient(model.identity_basis, d_world);
        grads->d_beta += basis_coefficient_gradient(model.expression_basis, d_world);
        grads->d_offsets += d_world;
    }
    return obj;
}

namespace {

/** Parameter blocks updated by a stage; gamma covers every rig camera. */
struct ActiveBlocks
{
    bool alpha = false;
    bool beta = false;
    bool delta = false;
    bool gamma = false;
    bool offsets = false;
};

ActiveBlocks stage_blocks(FitStage stage)
{
    ActiveBlocks a;
    a.alpha = a.beta = true;
    if (stage != FitStage::Landmark)
        a.delta = a.gamma = true;
    if (stage == FitStage::Vertex)
        a.offsets = true;
    return a;
}

std::vector<int> rig_camera_ids(const std::vector<SceneCamera>& rig)
{
    std::vector<int> ids;
    ids.reserve(rig.size());
    for (const SceneCamera& cam : rig)
        ids.push_back(cam.id);
    return ids;
}

AdamMoments& block_moments(FitState& state, const std::string& key, Eigen::Index size)
{
    auto it = state.moments.find(key);
    if (it == state.moments.end())
        it = state.moments.emplace(key, AdamMoments::zeros(size)).first;
    return it->second;
}

template <typename Fn>
auto with_stage_context(FitStage stage, int iteration, Fn&& fn)
{
    const auto prefix = [&] {
        return "stage " + to_string(stage) + ", iteration " + std::to_string(iteration) +
               ": ";
    };
    try
    {
        return fn();
    }
    catch (const ValidationError& e)
    {
        throw ValidationError(prefix() + e.what());
    }
    catch (const NumericalError& e)
    {
        throw NumericalError(prefix() + e.what());
    }
    catch (const IoError& e)
    {
        throw IoError(prefix() + e.what());
    }
}

StageReport run_stage(FitStage stage, const MorphableModel& model,
                      const std::vector<SceneCamera>& rig,
                      const std::vector<RGBDFrame>& views, FitState& state,
                      const MatN3* edge_reference, const MeshTopology& topo,
                      const FitConfig& config, double lr, int iters)
{
    const auto start = std::chrono::steady_clock::now();
    StageReport report;
    report.stage = to_string(stage);

    const ActiveBlocks active = stage_blocks(stage);
    AdamConfig adam;
    adam.lr = lr;
    adam.beta1 = config.adam_beta1;
    adam.beta2 = config.adam_beta2;
    adam.eps = config.adam_eps;

    const int n = model.vertex_count;
    for (int it = 0; it < iters; ++it)
    {
        ParamGrads grads = ParamGrads::zeros(model, rig_camera_ids(rig));
        const StageObjective obj = with_stage_context(stage, it, [&] {
            return total_loss(stage, model, rig, views, state.params, state.offsets,
                              edge_reference, topo, config, &grads);
        });
        report.total_loss.push_back(obj.total);
        for (const auto& [name, value] : obj.terms)
            report.term_loss[name].push_back(value);

        // Frozen blocks still fold their gradients into the moment estimates,
        // so a later stage unfreezes them with calibrated step sizes.
        ++state.iteration;
        const int t = state.iteration;
        auto update = [&](bool is_active, VecX& param, const VecX& grad,
                          const std::string& key) {
            AdamMoments& moments = block_moments(state, key, param.size());
            if (is_active)
                adam_step(param, grad, moments, t, adam);
            else
                adam_accumulate(grad, moments, adam);
        };
        update(active.alpha, state.params.alpha, grads.d_alpha, "alpha");
        update(active.beta, state.params.beta, grads.d_beta, "beta");
        update(active.delta, state.params.delta, grads.d_delta, "delta");
        for (const SceneCamera& cam : rig)
            update(active.gamma, state.params.gamma.at(cam.id), grads.d_gamma.at(cam.id),
                   "gamma:" + std::to_string(cam.id));
        {
            VecX flat = Eigen::Map<const VecX>(state.offsets.offsets.data(), 3 * n);
            const VecX grad_flat = Eigen::Map<const VecX>(grads.d_offsets.data(), 3 * n);
            update(active.offsets, flat, grad_flat, "offsets");
            if (active.offsets)
                Eigen::Map<VecX>(state.offsets.offsets.data(), 3 * n) = flat;
        }
    }

    report.final_params = state.params;
    report.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

void check_frame_inputs(const MorphableModel& model, const std::vector<SceneCamera>& rig,
                        const std::vector<RGBDFrame>& views)
{
    check_views(rig, views);
    const std::size_t expected = model.landmark_indices.size();
    for (const RGBDFrame& view : views)
    {
        if (view.landmarks2d.size() != expected)
            throw ValidationError("camera " + std::to_string(view.camera_id) +
                                  ": expected " + std::to_string(expected) +
                                  " landmarks, got " +
                                  std::to_string(view.landmarks2d.size()));
    }
}

} // namespace

FitResult fit_first_frame(const MorphableModel& model, const std::vector<SceneCamera>& rig,
                          const std::vector<RGBDFrame>& views, const FitConfig& config)
{
    config.validate();
    model.validate();
    check_frame_inputs(model, rig, views);
    const MeshTopology topo = MeshTopology::build(*model.triangles, model.vertex_count);

    FitResult result;
    FitState& state = result.state;
    state.params = FaceParams::zeros(model, rig_camera_ids(rig));
    state.offsets = VertexOffsets::zeros(model.vertex_count);

    // Stage 1: rigid-free landmark alignment of the model coefficients.
    state.moments.clear();
    state.iteration = 0;
    result.reports.push_back(run_stage(FitStage::Landmark, model, rig, views, state, nullptr,
                                       topo, config, config.lr_first,
                                       config.iters_landmark));

    // Stage 2: photometric + depth fitting; ambient-dominant lighting start.
    for (auto& [id, gamma] : state.params.gamma)
    {
        gamma.setZero();
        gamma[0] = gamma[9] = gamma[18] = 0.8;
    }
    state.moments.clear();
    state.iteration = 0;
    result.reports.push_back(run_stage(FitStage::Dmm, model, rig, views, state, nullptr,
                                       topo, config, config.lr_first, config.iters_stage2));

    // Stage 3: per-vertex refinement against the stage-2 surface. Optimizer
    // state carries over: the moments the offsets block gathered while frozen
    // in stage 2 let it start with honest step sizes instead of a +/-lr jolt.
    const MatN3 edge_reference = assemble_face(model, state.params, state.offsets).vertices;
    result.reports.push_back(run_stage(FitStage::Vertex, model, rig, views, state,
                                       &edge_reference, topo, config, config.lr_first,
                                       config.iters_stage3));
    return result;
}

FitState fit_next_frame(const MorphableModel& model, const std::vector<SceneCamera>& rig,
                        const std::vector<RGBDFrame>& views, const FitState& prev,
                        const FitConfig& config, StageReport* report)
{
    config.validate();
    model.validate();
    check_frame_inputs(model, rig, views);
    const MeshTopology topo = MeshTopology::build(*model.triangles, model.vertex_count);

    // Edge lengths are anchored to the previous frame's surface, and the
    // previous Adam moments carry over so a repeated frame stays put.
    const MatN3 edge_reference = assemble_face(model, prev.params, prev.offsets).vertices;
    FitState state = prev;
    StageReport stage_report = run_stage(FitStage::Vertex, model, rig, views, state,
                                         &edge_reference, topo, config, config.lr_seq,
                                         config.iters_seq);
    if (report)
        *report = std::move(stage_report);
    return state;
}

SequenceResult reconstruct_sequence(const MorphableModel& model,
                                    const std::filesystem::path& scene_dir,
                                    const FitConfig& config,
                                    const std::filesystem::path& out_dir)
{
    config.validate();
    const SceneInfo info = load_scene_info(scene_dir);

    SequenceResult result;
    result.sequence.vertex_count = model.vertex_count;
    result.sequence.fps = info.fps;
    result.sequence.triangles = model.triangles;

    FitState state;
    for (int f = 0; f < info.frame_count; ++f)
    {
        std::vector<RGBDFrame> views;
        views.reserve(info.cameras.size());
        for (const SceneCamera& cam : info.cameras)
            views.push_back(load_frame(scene_dir, cam, f));

        FrameReport frame_report;
        frame_report.frame_index = f;
        if (f == 0)
        {
            FitResult first = fit_first_frame(model, info.cameras, views, config);
            state = std::move(first.state);
            frame_report.stages = std::move(first.reports);
        }
        else
        {
            StageReport stage;
            state = fit_next_frame(model, info.cameras, views, state, config, &stage);
            frame_report.stages.push_back(std::move(stage));
        }
        result.frames.push_back(std::move(frame_report));
        result.sequence.vertices.push_back(
            assemble_face(model, state.params, state.offsets).vertices);
        result.sequence.offsets.push_back(state.offsets.offsets);
        result.sequence.params.push_back(state.params);
    }

    if (!out_dir.empty())
    {
        std::filesystem::create_directories(out_dir);
        save_sequence(result.sequence, out_dir.string());
        save_report(out_dir / "report.json", result.frames);
    }
    return result;
}

void save_report(const std::filesystem::path& path, const std::vector<FrameReport>& frames)
{
    json root;
    root["format_version"] = 1;
    json frame_array = json::array();
    for (const FrameReport& frame : frames)
    {
        json stages = json::array();
        for (const StageReport& stage : frame.stages)
        {
            json s;
            s["stage"] = stage.stage;
            s["iterations"] = stage.total_loss.size();
            s["wall_time_s"] = stage.wall_time_s;
            s["total_loss"] = stage.total_loss;
            json terms;
            for (const auto& [name, series] : stage.term_loss)
                terms[name] = series;
            s["terms"] = std::move(terms);
            stages.push_back(std::move(s));
        }
        frame_array.push_back(json{{"frame_index", frame.frame_index},
                                   {"stages", std::move(stages)}});
    }
    root["frames"] = std::move(frame_array);

    std::ofstream out(path);
    if (!out)
        throw IoError("cannot open for writing: " + path.string());
    out << root.dump(2) << "\n";
    if (!out)
        throw IoError("write failed: " + path.string());
}

} // namespace facefit
