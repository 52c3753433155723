/*
 * facefit - multi-view RGB-D 4D face reconstruction in modern C++.
 *
 * File: src/losses.cpp
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
#include "facefit/losses.hpp"

#include "facefit/error.hpp"

#include <cmath>
#include <cstddef>
#include <string>

namespace facefit {

namespace {

void check_landmark_rows(const MatN3& vertices, const std::vector<int>& landmark_indices)
{
    for (int idx : landmark_indices)
    {
        if (idx < 0 || idx >= static_cast<int>(vertices.rows()))
        {
            throw ValidationError("landmark index " + std::to_string(idx) +
                                  " out of range for " + std::to_string(vertices.rows()) +
                                  " vertices");
        }
    }
}

} // namespace

double loss_landmark3d(const MatN3& vertices, const std::vector<int>& landmark_indices,
                       const std::vector<LandmarkObservation>& observed)
{
    check_landmark_rows(vertices, landmark_indices);
    if (observed.size() != landmark_indices.size())
    {
        throw ValidationError("landmark3d: expected " +
                              std::to_string(landmark_indices.size()) +
                              " observations, got " + std::to_string(observed.size()));
    }
    double sum = 0.0;
    int valid = 0;
    for (std::size_t i = 0; i < landmark_indices.size(); ++i)
    {
        if (!observed[i].valid)
            continue;
        const Vec3 diff = vertices.row(landmark_indices[i]).transpose() - observed[i].point;
        sum += diff.squaredNorm();
        ++valid;
    }
    if (valid == 0)
        throw ValidationError("landmark3d: no valid landmark observations");
    return sum / valid;
}

void loss_landmark3d_backward(const MatN3& vertices,
                              const std::vector<int>& landmark_indices,
                              const std::vector<LandmarkObservation>& observed,
                              double upstream, MatN3& d_vertices)
{
    int valid = 0;
    for (const auto& obs : observed)
        valid += obs.valid ? 1 : 0;
    if (valid == 0)
        throw ValidationError("landmark3d: no valid landmark observations");
    const double scale = 2.0 * upstream / valid;
    for (std::size_t i = 0; i < landmark_indices.size(); ++i)
    {
        if (!observed[i].valid)
            continue;
        const int row = landmark_indices[i];
        const Vec3 diff = vertices.row(row).transpose() - observed[i].point;
        d_vertices.row(row) += scale * diff.transpose();
    }
}

double loss_landmark2d(const MatN3& vertices, const std::vector<int>& landmark_indices,
                       const CameraIntrinsics& cam, const RigidTransform& extrinsics,
                       const std::vector<Vec2>& observed)
{
    check_landmark_rows(vertices, landmark_indices);
    if (observed.size() != landmark_indices.size())
    {
        throw ValidationError("landmark2d: expected " +
                              std::to_string(landmark_indices.size()) +
                              " observations, got " + std::to_string(observed.size()));
    }
    if (landmark_indices.empty())
        throw ValidationError("landmark2d: no landmarks");
    const double diag_sq = static_cast<double>(cam.width) * cam.width +
                           static_cast<double>(cam.height) * cam.height;
    double sum = 0.0;
    for (std::size_t i = 0; i < landmark_indices.size(); ++i)
    {
        const Vec3 p = extrinsics.apply(vertices.row(landmark_indices[i]).transpose());
        if (p.z() <= kNearPlane)
        {
            throw NumericalError("landmark2d: landmark " + std::to_string(i) +
                                 " behind camera");
        }
        const Vec2 px = project(cam, p);
        sum += (px - observed[i]).squaredNorm();
    }
    return sum / (static_cast<double>(landmark_indices.size()) * diag_sq);
}

void loss_landmark2d_backward(const MatN3& vertices,
                              const std::vector<int>& landmark_indices,
                              const CameraIntrinsics& cam, const RigidTransform& extrinsics,
                              const std::vector<Vec2>& observed, double upstream,
                              MatN3& d_vertices)
{
    const double diag_sq = static_cast<double>(cam.width) * cam.width +
                           static_cast<double>(cam.height) * cam.height;
    const double scale =
        2.0 * upstream / (static_cast<double>(landmark_indices.size()) * diag_sq);
    for (std::size_t i = 0; i < landmark_indices.size(); ++i)
    {
        const int row = landmark_indices[i];
        const Vec3 p = extrinsics.apply(vertices.row(row).transpose());
        if (p.z() <= kNearPlane)
        {
            throw NumericalError("landmark2d: landmark " + std::to_string(i) +
                                 " behind camera");
        }
        const Vec2 px = project(cam, p);
        const Vec2 g = scale * (px - observed[i]);
        // d(px)/d(p) for u = fx x / z + cx, v = fy y / z + cy.
        Vec3 d_p;
        d_p.x() = g.x() * cam.fx / p.z();
        d_p.y() = g.y() * cam.fy / p.z();
        d_p.z() = -(g.x() * cam.fx * p.x() + g.y() * cam.fy * p.y()) / (p.z() * p.z());
        d_vertices.row(row) += (extrinsics.rotation.transpose() * d_p).transpose();
    }
}

double loss_rgb(const RenderOutput& rendered, const ImageRGB8& observed)
{
    if (observed.width != rendered.width || observed.height != rendered.height)
        throw ValidationError("rgb loss: image size does not match render");
    double sum = 0.0;
    int covered = 0;
    for (std::size_t pix = 0; pix < rendered.pixel_count(); ++pix)
    {
        if (!rendered.coverage[pix])
            continue;
        double sq = 0.0;
        for (int c = 0; c < 3; ++c)
        {
            const double diff =
                rendered.color[3 * pix + c] - observed.data[3 * pix + c] / 255.0;
            sq += diff * diff;
        }
        sum += std::sqrt(sq);
        ++covered;
    }
    if (covered == 0)
        throw ValidationError("rgb loss: no covered pixels");
    return sum / covered;
}

void loss_rgb_backward(const RenderOutput& rendered, const ImageRGB8& observed,
                       double upstream, std::vector<double>& d_color)
{
    if (observed.width != rendered.width || observed.height != rendered.height)
        throw ValidationError("rgb loss: image size does not match render");
    d_color.resize(rendered.color.size(), 0.0);
    int covered = 0;
    for (std::size_t pix = 0; pix < rendered.pixel_count(); ++pix)
        covered += rendered.coverage[pix] ? 1 : 0;
    if (covered == 0)
        throw ValidationError("rgb loss: no covered pixels");
    const double scale = upstream / covered;
    for (std::size_t pix = 0; pix < rendered.pixel_count(); ++pix)
    {
        if (!rendered.coverage[pix])
            continue;
        Vec3 diff;
        for (int c = 0; c < 3; ++c)
            diff[c] = rendered.color[3 * pix + c] - observed.data[3 * pix + c] / 255.0;
        const double norm = diff.norm();
        if (norm < 1e-15)
            continue; // subgradient zero at the cone apex
        for (int c = 0; c < 3; ++c)
            d_color[3 * pix + c] += scale * diff[c] / norm;
    }
}

double loss_depth(const RenderOutput& rendered, const ImageGray16& observed, double trunc)
{
    if (observed.width != rendered.width || observed.height != rendered.height)
        throw ValidationError("depth loss: image size does not match render");
    double sum = 0.0;
    int valid = 0;
    for (std::size_t pix = 0; pix < rendered.pixel_count(); ++pix)
    {
        if (!rendered.coverage[pix] || observed.data[pix] == 0)
            continue;
        const double z_obs = observed.data[pix] / 1000.0;
        sum += std::min(std::abs(rendered.depth[pix] - z_obs), trunc);
        ++valid;
    }
    if (valid == 0)
        throw ValidationError("depth loss: no jointly valid pixels");
    return sum / valid;
}

void loss_depth_backward(const RenderOutput& rendered, const ImageGray16& observed,
                         double trunc, double upstream, std::vector<double>& d_depth)
{
    if (observed.width != rendered.width || observed.height != rendered.height)
        throw ValidationError("depth loss: image size does not match render");
    d_depth.resize(rendered.depth.size(), 0.0);
    int valid = 0;
    for (std::size_t pix = 0; pix < rendered.pixel_count(); ++pix)
    {
        if (rendered.coverage[pix] && observed.data[pix] != 0)
            ++valid;
    }
    if (valid == 0)
        throw ValidationError("depth loss: no jointly valid pixels");
    const double scale = upstream / valid;
    for (std::size_t pix = 0; pix < rendered.pixel_count(); ++pix)
    {
        if (!rendered.coverage[pix] || observed.data[pix] == 0)
            continue;
        const double diff = rendered.depth[pix] - observed.data[pix] / 1000.0;
        if (std::abs(diff) >= trunc || diff == 0.0)
            continue; // clamped or at the kink: zero (sub)gradient
        d_depth[pix] += diff > 0.0 ? scale : -scale;
    }
}

double loss_prior(const FaceParams& params)
{
    return params.alpha.squaredNorm() + params.beta.squaredNorm() +
           params.delta.squaredNorm();
}

void loss_prior_backward(const FaceParams& params, double upstream, VecX& d_alpha,
                         VecX& d_beta, VecX& d_delta)
{
    d_alpha += 2.0 * upstream * params.alpha;
    d_beta += 2.0 * upstream * params.beta;
    d_delta += 2.0 * upstream * params.delta;
}

double loss_edge(const MatN3& deformed, const MatN3& reference, const MeshTopology& topo)
{
    if (deformed.rows() != reference.rows())
        throw ValidationError("edge loss: vertex counts differ");
    if (topo.edges.empty())
        throw ValidationError("edge loss: mesh has no edges");
    double sum = 0.0;
    for (const auto& [a, b] : topo.edges)
    {
        const double len_d = (deformed.row(a) - deformed.row(b)).norm();
        const double len_r = (reference.row(a) - reference.row(b)).norm();
        const double diff = len_d - len_r;
        sum += diff * diff;
    }
    return sum / static_cast<double>(topo.edges.size());
}

void loss_edge_backward(const MatN3& deformed, const MatN3& reference,
                        const MeshTopology& topo, double upstream, MatN3& d_deformed)
{
    if (topo.edges.empty())
        throw ValidationError("edge loss: mesh has no edges");
    const double scale = 2.0 * upstream / static_cast<double>(topo.edges.size());
    for (const auto& [a, b] : topo.edges)
    {
        const Vec3 e = deformed.row(a).transpose() - deformed.row(b).transpose();
        const double len_d = e.norm();
        if (len_d < 1e-15)
            continue; // collapsed edge: direction undefined, subgradient zero
        const double len_r = (reference.row(a) - reference.row(b)).norm();
        const Vec3 g = scale * (len_d - len_r) / len_d * e;
        d_deformed.row(a) += g.transpose();
        d_deformed.row(b) -= g.transpose();
    }
}

double loss_laplacian(const MatN3& offsets, const MeshTopology& topo)
{
    const auto n = offsets.rows();
    if (static_cast<std::size_t>(n) != topo.neighbors.size())
        throw ValidationError("laplacian loss: topology size does not match offsets");
    if (n == 0)
        throw ValidationError("laplacian loss: empty mesh");
    double sum = 0.0;
    for (Eigen::Index v = 0; v < n; ++v)
    {
        const auto& ring = topo.neighbors[v];
        if (ring.empty())
            continue;
        Vec3 mean = Vec3::Zero();
        for (int u : ring)
            mean += offsets.row(u).transpose();
        mean /= static_cast<double>(ring.size());
        sum += (offsets.row(v).transpose() - mean).squaredNorm();
    }
    return sum / static_cast<double>(n);
}

void loss_laplacian_backward(const MatN3& offsets, const MeshTopology& topo,
                             double upstream, MatN3& d_offsets)
{
    const auto n = offsets.rows();
    if (static_cast<std::size_t>(n) != topo.neighbors.size())
        throw ValidationError("laplacian loss: topology size does not match offsets");
    if (n == 0)
        throw ValidationError("laplacian loss: empty mesh");
    const double scale = 2.0 * upstream / static_cast<double>(n);
    for (Eigen::Index v = 0; v < n; ++v)
    {
        const auto& ring = topo.neighbors[v];
        if (ring.empty())
            continue;
        Vec3 mean = Vec3::Zero();
        for (int u : ring)
            mean += offsets.row(u).transpose();
        mean /= static_cast<double>(ring.size());
        const Vec3 g = scale * (offsets.row(v).transpose() - mean);
        d_offsets.row(v) += g.transpose();
        const Vec3 share = g / static_cast<double>(ring.size());
        for (int u : ring)
            d_offsets.row(u) -= share.transpose();
    }
}

double loss_offset(const MatN3& offsets)
{
    if (offsets.rows() == 0)
        throw ValidationError("offset loss: empty offset field");
    return offsets.squaredNorm() / static_cast<double>(offsets.rows());
}

void loss_offset_backward(const MatN3& offsets, double upstream, MatN3& d_offsets)
{
    if (offsets.rows() == 0)
        throw ValidationError("offset loss: empty offset field");
    d_offsets += (2.0 * upstream / static_cast<double>(offsets.rows())) * offsets;
}

} // namespace facefit
