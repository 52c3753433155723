/*
 * facefit - multi-view RGB-D 4D face reconstruction in modern C++.
 *
 * File: include/facefit/losses.hpp
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
#include "facefit/model.hpp"
#include "facefit/renderer.hpp"
#include "facefit/types.hpp"

#include <vector>

namespace facefit {

/**
 * Scalar loss terms of the reconstruction objective, each with an explicit
 * backward companion. Backwards accumulate `upstream * d(loss)/d(input)`
 * into caller-owned buffers so multi-camera sums compose by repetition.
 */

/** Mean squared Euclidean distance over valid 3D landmark pairs. */
double loss_landmark3d(const MatN3& vertices, const std::vector<int>& landmark_indices,
                       const std::vector<LandmarkObservation>& observed);
void loss_landmark3d_backward(const MatN3& vertices,
                              const std::vector<int>& landmark_indices,
                              const std::vector<LandmarkObservation>& observed,
                              double upstream, MatN3& d_vertices);

/**
 * Mean squared pixel distance between projected landmarks and observations,
 * normalized by the squared image diagonal. Vertices are in world space;
 * `extrinsics` maps world to the camera. Throws NumericalError when a
 * landmark falls behind the camera.
 */
double loss_landmark2d(const MatN3& vertices, const std::vector<int>& landmark_indices,
                       const CameraIntrinsics& cam, const RigidTransform& extrinsics,
                       const std::vector<Vec2>& observed);
void loss_landmark2d_backward(const MatN3& vertices,
                              const std::vector<int>& landmark_indices,
                              const CameraIntrinsics& cam, const RigidTransform& extrinsics,
                              const std::vector<Vec2>& observed, double upstream,
                              MatN3& d_vertices);

/**
 * Mean over covered pixels of the Euclidean RGB residual norm; the observed
 * 8-bit image is mapped to [0, 1]. Throws ValidationError with no coverage.
 */
double loss_rgb(const RenderOutput& rendered, const ImageRGB8& observed);
void loss_rgb_backward(const RenderOutput& rendered, const ImageRGB8& observed,
                       double upstream, std::vector<double>& d_color);

/**
 * Mean absolute depth error over pixels covered by the render AND valid in
 * the observation, clamped at trunc meters. Clamped pixels carry zero
 * gradient.
 */
double loss_depth(const RenderOutput& rendered, const ImageGray16& observed, double trunc);
void loss_depth_backward(const RenderOutput& rendered, const ImageGray16& observed,
                         double trunc, double upstream, std::vector<double>& d_depth);

/** Squared-norm parameter prior over alpha, beta and delta; gamma excluded. */
double loss_prior(const FaceParams& params);
void loss_prior_backward(const FaceParams& params, double upstream, VecX& d_alpha,
                         VecX& d_beta, VecX& d_delta);

/** Mean over unique edges of the squared edge-length change versus a reference. */
double loss_edge(const MatN3& deformed, const MatN3& reference, const MeshTopology& topo);
void loss_edge_backward(const MatN3& deformed, const MatN3& reference,
                        const MeshTopology& topo, double upstream, MatN3& d_deformed);

/**
 * Mean squared umbrella-Laplacian of the offset field:
 * mean_v ||R_v - mean_{u in N(v)} R_u||^2. Vertices without neighbors
 * contribute zero.
 */
double loss_laplacian(const MatN3& offsets, const MeshTopology& topo);
void loss_laplacian_backward(const MatN3& offsets, const MeshTopology& topo,
                             double upstream, MatN3& d_offsets);

/** Mean squared offset magnitude. */
double loss_offset(const MatN3& offsets);
void loss_offset_backward(const MatN3& offsets, double upstream, MatN3& d_offsets);

} // namespace facefit
