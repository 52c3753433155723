/*
 * facefit - multi-view RGB-D 4D face reconstruction in modern C++.
 *
 * File: include/facefit/renderer.hpp
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
#include "facefit/types.hpp"

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace facefit {

/** Spherical-harmonics lighting: 9 real SH coefficients per color channel. */
struct ShadingParams
{
    VecX gamma = VecX::Zero(27); ///< layout [channel * 9 + band]
};

/** Per-pixel fragment record; visibility is frozen here for the backward pass. */
struct FragInfo
{
    std::int32_t tri = -1;
    double w[3] = {0, 0, 0}; ///< perspective-correct weights, original vertex order
};

/**
 * Rasterization result. Color is linear radiance (pre-clamp, so gradients
 * are exact); depth is camera-space z in meters with +inf where uncovered.
 */
struct RenderOutput
{
    int width = 0, height = 0;
    std::vector<double> color;      ///< h*w*3, row-major, rgb
    std::vector<double> depth;      ///< h*w
    std::vector<std::uint8_t> coverage; ///< h*w, 1 where a fragment landed
    std::vector<FragInfo> frags;    ///< h*w

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
};

inline constexpr double kNearPlane = 1e-3; ///< meters; triangles touching it are culled
inline constexpr double kDepthInfinity = std::numeric_limits<double>::infinity();

/**
 * Z-buffered perspective rasterization of a camera-space mesh. Pixel (x, y)
 * samples the projected plane at exactly (x, y), matching the depth
 * back-projection convention. Top-left fill rule; ties in depth resolve to
 * the lower triangle id; single-threaded and bit-deterministic. Per-vertex
 * colors in mesh.albedo are perspective-correct interpolated; an empty
 * albedo renders color as zeros.
 */
RenderOutput rasterize(const Mesh& mesh, const CameraIntrinsics& cam);

/**
 * Re-evaluates color and depth at the fragments recorded in `ref`, with
 * visibility frozen but current vertex positions and attributes. This is
 * the smooth function the backward pass differentiates; finite-differencing
 * it validates the analytic gradients.
 */
void render_frozen(const Mesh& mesh, const CameraIntrinsics& cam, const RenderOutput& ref,
                   std::vector<double>& color, std::vector<double>& depth);

struct RenderGrads
{
    MatN3 d_vertices;   ///< w.r.t. camera-space vertex positions
    MatN3 d_attributes; ///< w.r.t. per-vertex colors
};

/**
 * Backpropagates image-space gradients through interpolation and projection
 * with per-pixel visibility frozen at the forward pass; no gradients flow
 * across silhouette or occlusion boundaries. Either gradient image may be
 * empty (treated as zero).
 */
RenderGrads render_backward(const Mesh& mesh, const CameraIntrinsics& cam,
                            const RenderOutput& out, const std::vector<double>& d_color,
                            const std::vector<double>& d_depth);

/** Area-weighted vertex normals: incident triangle cross products, renormalized. */
MatN3 vertex_normals(const MatN3& vertices, const TriangleList& triangles);

/** Chains unit-normal gradients back to the vertex positions. */
MatN3 vertex_normals_backward(const MatN3& vertices, const TriangleList& triangles,
                              const MatN3& d_normals);

/** First 9 real spherical harmonics (Condon-Shortley-free) at a unit direction. */
Eigen::Matrix<double, 9, 1> sh_basis(const Vec3& n);

/**
 * Per-vertex irradiance: shaded_c(v) = albedo_c(v) * sum_k gamma[9c+k] * Y_k(n_v).
 * Normals must be unit length to 1e-3.
 */
MatN3 sh_shade(const MatN3& albedo, const MatN3& normals, const ShadingParams& shading);

struct ShadeGrads
{
    MatN3 d_albedo;
    MatN3 d_normals;
    VecX d_gamma;
};

ShadeGrads sh_shade_backward(const MatN3& albedo, const MatN3& normals,
                             const ShadingParams& shading, const MatN3& d_shaded);

/** Debug dumps: color clamps [0,1] to 8 bits; depth rounds to u16 mm, uncovered = 0. */
void write_render_debug(const RenderOutput& out, const std::string& color_png,
                        const std::string& depth_png);

} // namespace facefit
