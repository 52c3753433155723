/*
 * facefit - multi-view RGB-D 4D face reconstruction in modern C++.
 *
 * File: src/camera.cpp
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
#include "facefit/camera.hpp"

#include "facefit/error.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <string>

namespace facefit {

void CameraIntrinsics::validate() const
{
    if (fx <= 0 || fy <= 0)
        throw ValidationError("intrinsics: focal lengths must be positive");
    if (width <= 0 || height <= 0)
        throw ValidationError("intrinsics: image size must be positive");
    if (cx < 0 || cx >= width || cy < 0 || cy >= height)
        throw ValidationError("intrinsics: principal point outside the image");
}

RigidTransform RigidTransform::inverse() const
{
    RigidTransform inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(rotation.transpose() * translation);
    return inv;
}

RigidTransform RigidTransform::compose(const RigidTransform& other) const
{
    RigidTransform out;
    out.rotation = rotation * other.rotation;
    out.translation = rotation * other.translation + translation;
    return out;
}

Mat4 RigidTransform::matrix() const
{
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
}

RigidTransform RigidTransform::from_matrix(const Mat4& m)
{
    RigidTransform t;
    t.rotation = m.topLeftCorner<3, 3>();
    t.translation = m.topRightCorner<3, 1>();
    return t;
}

void RigidTransform::validate() const
{
    const double ortho = (rotation.transpose() * rotation - Mat3::Identity())
                             .cwiseAbs()
                             .maxCoeff();
    if (ortho > 1e-9)
        throw ValidationError("rigid transform: rotation is not orthonormal");
    if (std::abs(rotation.determinant() - 1.0) > 1e-9)
        throw ValidationError("rigid transform: rotation determinant is not +1");
}

PointCloud backproject_depth(const ImageGray16& depth, const CameraIntrinsics& cam,
                             int stride)
{
    cam.validate();
    if (stride < 1)
        throw ValidationError("backproject: stride must be at least 1");
    if (depth.width != cam.width || depth.height != cam.height)
        throw ValidationError("backproject: depth image size does not match intrinsics");

    const auto z_at = [&](int u, int v) { return depth.at(u, v) / 1000.0; };
    const auto point_at = [&](int u, int v) {
        const double z = z_at(u, v);
        return Vec3((u - cam.cx) * z / cam.fx, (v - cam.cy) * z / cam.fy, z);
    };

    std::vector<Vec3> points;
    std::vector<Vec3> normals;
    for (int v = 0; v < depth.height; v += stride)
        for (int u = 0; u < depth.width; u += stride)
        {
            if (u < 1 || v < 1 || u + 1 >= depth.width || v + 1 >= depth.height)
                continue;
            if (depth.at(u, v) == 0 || depth.at(u - 1, v) == 0 || depth.at(u + 1, v) == 0 ||
                depth.at(u, v - 1) == 0 || depth.at(u, v + 1) == 0)
                continue;
            const Vec3 du = point_at(u + 1, v) - point_at(u - 1, v);
            const Vec3 dv = point_at(u, v + 1) - point_at(u, v - 1);
            Vec3 n = du.cross(dv);
            const double norm = n.norm();
            if (norm < 1e-15)
                continue;
            n /= norm;
            if (n.z() > 0.0) // surfaces seen by the camera face it
                n = -n;
            points.push_back(point_at(u, v));
            normals.push_back(n);
        }

    PointCloud cloud;
    cloud.points.resize(static_cast<Eigen::Index>(points.size()), 3);
    cloud.normals.resize(static_cast<Eigen::Index>(points.size()), 3);
    for (std::size_t i = 0; i < points.size(); ++i)
    {
        cloud.points.row(static_cast<Eigen::Index>(i)) = points[i];
        cloud.normals.row(static_cast<Eigen::Index>(i)) = normals[i];
    }
    return cloud;
}

namespace {

// Least-squares rigid map from p onto q via cross-covariance SVD with a
// reflection guard; scale is fixed at 1.
RigidTransform align_rigid(const std::vector<Vec3>& p, const std::vector<Vec3>& q)
{
    const auto m = static_cast<double>(p.size());
    Vec3 p_mean = Vec3::Zero(), q_mean = Vec3::Zero();
    for (std::size_t i = 0; i < p.size(); ++i)
    {
        p_mean += p[i];
        q_mean += q[i];
    }
    p_mean /= m;
    q_mean /= m;

    Mat3 cov = Mat3::Zero();
    for (std::size_t i = 0; i < p.size(); ++i)
        cov += (p[i] - p_mean) * (q[i] - q_mean).transpose();

    const Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vec3 sigma = svd.singularValues();
    if (sigma[0] < 1e-15 || sigma[1] < 1e-9 * sigma[0])
        throw NumericalError(
            "landmark alignment: degenerate configuration (collinear or coincident points)");

    Mat3 d = Mat3::Identity();
    if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0)
        d(2, 2) = -1.0;

    RigidTransform t;
    t.rotation = svd.matrixV() * d * svd.matrixU().transpose();
    t.translation = q_mean - t.rotation * p_mean;
    return t;
}

} // namespace

std::vector<RigidTransform>
landmark_init_extrinsics(const std::vector<std::vector<LandmarkObservation>>& per_camera)
{
    if (per_camera.empty())
        throw ValidationError("landmark alignment: no cameras");
    const auto& master = per_camera.front();

    std::vector<RigidTransform> out(per_camera.size());
    for (std::size_t cam = 1; cam < per_camera.size(); ++cam)
    {
        const auto& sub = per_camera[cam];
        if (sub.size() != master.size())
            throw ValidationError("landmark alignment: camera " + std::to_string(cam) +
                                  " landmark count does not match the master camera");
        std::vector<Vec3> p, q;
        for (std::size_t i = 0; i < master.size(); ++i)
            if (master[i].valid && sub[i].valid)
            {
                p.push_back(sub[i].point);
                q.push_back(master[i].point);
            }
        if (p.size() < 3)
            throw ValidationError("landmark alignment: camera " + std::to_string(cam) +
                                  " shares fewer than 3 valid landmarks with the master");
        out[cam] = align_rigid(p, q);
    }
    return out;
}

} // namespace facefit
