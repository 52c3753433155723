/*
 * facefit - multi-view RGB-D 4D face reconstruction in modern C++.
 *
 * File: include/facefit/camera.hpp
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

#include "facefit/image.hpp"
#include "facefit/types.hpp"

#include <vector>

namespace facefit {

/** Pinhole camera without lens distortion. Units: pixels. */
struct CameraIntrinsics
{
    double fx = 0, fy = 0;
    double cx = 0, cy = 0;
    int width = 0, height = 0;

    void validate() const;
};

/** Direct isometry: x_out = rotation * x_in + translation. Units: meters. */
struct RigidTransform
{
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
    RigidTransform inverse() const;
    /** Composition this∘other: apply `other` first, then this. */
    RigidTransform compose(const RigidTransform& other) const;
    Mat4 matrix() const;
    static RigidTransform from_matrix(const Mat4& m);

    /** Checks RᵀR == I and det(R) == +1 to 1e-9; throws ValidationError. */
    void validate() const;
};

/** One registered color+depth capture from a single camera. */
struct RGBDFrame
{
    int camera_id = 0;
    ImageRGB8 color;
    ImageGray16 depth;             ///< millimeters; 0 marks invalid pixels
    std::vector<Vec2> landmarks2d; ///< pixel (u, v), aligned with model landmark order
    int timestamp_index = 0;
};

/** Points with unit normals in one camera's space. */
struct PointCloud
{
    MatN3 points;
    MatN3 normals;

    int size() const { return static_cast<int>(points.rows()); }
};

/**
 * Projects a camera-space point to pixel coordinates (u, v). The caller
 * guarantees z > 0.
 */
inline Vec2 project(const CameraIntrinsics& cam, const Vec3& p)
{
    return {cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy};
}

/**
 * Lifts a depth image into a point cloud. A pixel (u, v) with depth d mm
 * yields point ((u-cx)z/fx, (v-cy)z/fy, z), z = d/1000 m, so projecting the
 * point returns (u, v) exactly. Normals come from central differences over
 * the depth grid, oriented toward the camera; pixels whose 4-neighborhood
 * contains an invalid or out-of-image sample are dropped. `stride` keeps
 * every stride-th pixel in both directions.
 */
PointCloud backproject_depth(const ImageGray16& depth, const CameraIntrinsics& cam,
                             int stride = 1);

/** A back-projected landmark; invalid when the depth under it was missing. */
struct LandmarkObservation
{
    Vec3 point = Vec3::Zero();
    bool valid = false;
};

/**
 * Closed-form rigid alignment of each camera's landmark set onto camera 0
 * (the master, which defines world space and gets the identity). Uses the
 * cross-covariance SVD with a reflection guard; only landmarks valid in both
 * the master and the subordinate camera participate.
 *
 * Throws ValidationError with fewer than 3 shared landmarks and
 * NumericalError when the shared set is collinear or coincident.
 */
std::vector<RigidTransform>
landmark_init_extrinsics(const std::vector<std::vector<LandmarkObservation>>& per_camera);

struct IcpResult
{
    RigidTransform transform;
    double residual = 0.0;                ///< mean |point-to-plane| over accepted pairs
    int iterations = 0;
    std::vector<double> residual_history; ///< one entry per accepted iteration
};

/**
 * Point-to-plane ICP refining `init` so that transform(source) matches
 * target. Per iteration: grid-hashed nearest neighbors within
 * max_corr_dist, rejection of pairs farther than 3x the median pair
 * distance, a linearized small-angle solve of the 6x6 normal equations,
 * and rotation re-orthonormalization. Iterations that would increase the
 * mean residual are reverted, so the residual history is non-increasing.
 * Stops when the parameter update norm drops below tol.
 *
 * Throws ValidationError on empty inputs and NumericalError when no
 * correspondences survive rejection.
 */
IcpResult icp_point_to_plane(const PointCloud& source, const PointCloud& target,
                             const RigidTransform& init, int max_iters = 50,
                             double tol = 1e-10, double max_corr_dist = 1.0);

} // namespace facefit
