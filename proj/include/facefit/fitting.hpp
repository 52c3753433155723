/*
 * facefit - multi-view RGB-D 4D face reconstruction in modern C++.
 *
 * File: include/facefit/fitting.hpp
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

#include "facefit/container.hpp"
#include "facefit/losses.hpp"
#include "facefit/model.hpp"
#include "facefit/optim.hpp"
#include "facefit/scene.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace facefit {

/**
 * Three-stage reconstruction optimizer. Stage 1 aligns the morphable model
 * to back-projected 3D landmarks, stage 2 fits model parameters against
 * rendered color/depth/landmark residuals, stage 3 adds free per-vertex
 * offsets under edge, Laplacian, and magnitude regularization. Sequences
 * warm-start each frame from the previous one and rerun only stage 3.
 */

enum class FitStage
{
    Landmark,
    Dmm,
    Vertex,
};

std::string to_string(FitStage stage);

struct FitConfig
{
    double lambda_d = 2.0;
    double lambda_lm = 100.0;
    double lambda_p = 0.001;
    double lambda_e = 20.0;
    double lambda_lap = 20.0;
    double lambda_op = 0.01;
    double lr_first = 0.01;
    double lr_seq = 0.005;
    int iters_landmark = 100;
    int iters_stage2 = 500;
    int iters_stage3 = 500;
    int iters_seq = 200;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double depth_trunc_m = 0.05;

    void validate() const;
};

/** Gradients with respect to every optimizable block. */
struct ParamGrads
{
    VecX d_alpha;
    VecX d_beta;
    VecX d_delta;
    std::map<int, VecX> d_gamma; ///< keyed by camera id
    MatN3 d_offsets;

    static ParamGrads zeros(const MorphableModel& model, const std::vector<int>& camera_ids);
};

struct StageObjective
{
    double total = 0.0;
    std::map<std::string, double> terms; ///< unweighted per-term values
};

/**
 * Back-projects each 2D landmark through the camera's depth map (nearest
 * pixel) into world space; observations with missing depth or off-image
 * pixels are marked invalid.
 */
std::vector<LandmarkObservation> landmark_world_observations(const SceneCamera& camera,
                                                             const RGBDFrame& frame);

/**
 * Stage objective over all cameras of one frame. Per-camera data terms are
 * summed in rig order; alpha/beta/delta/offsets are shared across cameras
 * while gamma is per camera. The landmark stage scores 3D landmark distance
 * plus the parameter prior with offsets frozen; the dmm stage scores
 * color + depth + 2D landmarks plus the prior; the vertex stage adds the
 * edge/Laplacian/offset regularizers and frees the offsets.
 * `edge_reference` (the stage-2 or previous-frame result mesh) is required
 * for the vertex stage. When `grads` is non-null, analytic gradients are
 * accumulated into it.
 */
StageObjective total_loss(FitStage stage, const MorphableModel& model,
                          const std::vector<SceneCamera>& rig,
                          const std::vector<RGBDFrame>& views, const FaceParams& params,
                          const VertexOffsets& offsets, const MatN3* edge_reference,
                          const MeshTopology& topo, const FitConfig& config,
                          ParamGrads* grads);

struct StageReport
{
    std::string stage;
    std::vector<double> total_loss;                         ///< one entry per iteration
    std::map<std::string, std::vector<double>> term_loss;   ///< unweighted series
    double wall_time_s = 0.0;
    FaceParams final_params;
};

struct FitState
{
    FaceParams params;
    VertexOffsets offsets;
    /// Adam moments keyed "alpha", "beta", "delta", "offsets", "gamma:<id>";
    /// persisted across frames so sequence fitting stays near fixed points.
    std::map<std::string, AdamMoments> moments;
    int iteration = 0; ///< Adam step count for the current moment set
};

struct FitResult
{
    FitState state;
    std::vector<StageReport> reports;
};

/** Runs the landmark, dmm, and vertex stages on one frame from scratch. */
FitResult fit_first_frame(const MorphableModel& model, const std::vector<SceneCamera>& rig,
                          const std::vector<RGBDFrame>& views, const FitConfig& config);

/** Vertex-stage refinement of the previous frame's state for the next frame. */
FitState fit_next_frame(const MorphableModel& model, const std::vector<SceneCamera>& rig,
                        const std::vector<RGBDFrame>& views, const FitState& prev,
                        const FitConfig& config, StageReport* report = nullptr);

struct FrameReport
{
    int frame_index = 0;
    std::vector<StageReport> stages; ///< three for frame 0, one afterwards
};

struct SequenceResult
{
    FaceSequence sequence;
    std::vector<FrameReport> frames;
};

/**
 * Reconstructs every frame of a scene directory. When `out_dir` is
 * non-empty, writes the fitted sequence container there along with
 * `report.json` holding the loss curves.
 */
SequenceResult reconstruct_sequence(const MorphableModel& model,
                                    const std::filesystem::path& scene_dir,
                                    const FitConfig& config,
                                    const std::filesystem::path& out_dir = {});

/** Writes the per-frame loss curves of a reconstruction as JSON. */
void save_report(const std::filesystem::path& path, const std::vector<FrameReport>& frames);

} // namespace facefit
