/*
 * facefit - multi-view RGB-D 4D face reconstruction in modern C++.
 *
 * File: src/raster.cpp
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
#include "facefit/error.hpp"
#include "facefit/renderer.hpp"

#include <algorithm>
#include <cmath>

namespace facefit {

namespace {

// Twice the signed area of (a, b, s); positive when (a, b, c) is clockwise
// on screen (y grows downward).
inline double edge_fn(const Vec2& a, const Vec2& b, double sx, double sy)
{
    return (b.x() - a.x()) * (sy - a.y()) - (b.y() - a.y()) * (sx - a.x());
}

// Top-left fill rule for a clockwise-on-screen triangle: a pixel exactly on
// an edge belongs to the triangle iff the edge is horizontal pointing right
// (a top edge) or points upward on screen (a left edge).
inline bool edge_accepts_zero(const Vec2& from, const Vec2& to)
{
    const double dx = to.x() - from.x();
    const double dy = to.y() - from.y();
    return (dy == 0.0 && dx > 0.0) || dy < 0.0;
}

struct ProjectedTri
{
    Vec2 p[3];    ///< projected pixel positions, original vertex order
    double z[3];  ///< camera-space depths
    int order[3]; ///< winding-corrected traversal order into p/z
};

// Shared forward geometry: projection, cull, winding fix. Returns false for
// culled or degenerate triangles.
bool project_triangle(const Mesh& mesh, const CameraIntrinsics& cam, const Triangle& tri,
                      ProjectedTri& out)
{
    for (int i = 0; i < 3; ++i)
    {
        const Vec3 v = mesh.vertices.row(tri[static_cast<std::size_t>(i)]);
        if (v.z() <= kNearPlane)
            return false;
        out.z[i] = v.z();
        out.p[i] = project(cam, v);
    }
    out.order[0] = 0;
    out.order[1] = 1;
    out.order[2] = 2;
    const double area = edge_fn(out.p[0], out.p[1], out.p[2].x(), out.p[2].y());
    if (area == 0.0)
        return false;
    if (area < 0.0)
        std::swap(out.order[1], out.order[2]);
    return true;
}

} // namespace

RenderOutput rasterize(const Mesh& mesh, const CameraIntrinsics& cam)
{
    cam.validate();
    if (mesh.vertices.rows() == 0 || !mesh.triangles || mesh.triangles->empty())
        throw ValidationError("rasterize: empty mesh");
    if (!mesh.vertices.allFinite())
        throw ValidationError("rasterize: non-finite vertices");
    const bool has_color = mesh.albedo.rows() == mesh.vertices.rows();

    RenderOutput out;
    out.width = cam.width;
    out.height = cam.height;
    out.color.assign(out.pixel_count() * 3, 0.0);
    out.depth.assign(out.pixel_count(), kDepthInfinity);
    out.coverage.assign(out.pixel_count(), 0);
    out.frags.assign(out.pixel_count(), FragInfo{});

    for (std::int32_t t = 0; t < static_cast<std::int32_t>(mesh.triangles->size()); ++t)
    {
        const Triangle& tri = (*mesh.triangles)[static_cast<std::size_t>(t)];
        ProjectedTri pt;
        if (!project_triangle(mesh, cam, tri, pt))
            continue;

        const Vec2& a = pt.p[pt.order[0]];
        const Vec2& b = pt.p[pt.order[1]];
        const Vec2& c = pt.p[pt.order[2]];

        const int x0 = std::max(0, static_cast<int>(std::ceil(
                                       std::min({a.x(), b.x(), c.x()}))));
        const int x1 = std::min(cam.width - 1, static_cast<int>(std::floor(
                                                   std::max({a.x(), b.x(), c.x()}))));
        const int y0 = std::max(0, static_cast<int>(std::ceil(
                                       std::min({a.y(), b.y(), c.y()}))));
        const int y1 = std::min(cam.height - 1, static_cast<int>(std::floor(
                                                    std::max({a.y(), b.y(), c.y()}))));

        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x)
            {
                const double sx = x, sy = y;
                const double e_ab = edge_fn(a, b, sx, sy);
                const double e_bc = edge_fn(b, c, sx, sy);
                const double e_ca = edge_fn(c, a, sx, sy);
                const bool inside = (e_ab > 0.0 || (e_ab == 0.0 && edge_accepts_zero(a, b))) &&
                                    (e_bc > 0.0 || (e_bc == 0.0 && edge_accepts_zero(b, c))) &&
                                    (e_ca > 0.0 || (e_ca == 0.0 && edge_accepts_zero(c, a)));
                if (!inside)
                    continue;

                // Barycentric weight of a corner is the opposite edge value.
                double lambda[3];
                const double area = e_ab + e_bc + e_ca;
                lambda[pt.order[0]] = e_bc / area;
                lambda[pt.order[1]] = e_ca / area;
                lambda[pt.order[2]] = e_ab / area;

                // Perspective-correct weights and depth.
                const double q0 = lambda[0] / pt.z[0];
                const double q1 = lambda[1] / pt.z[1];
                const double q2 = lambda[2] / pt.z[2];
                const double sum_q = q0 + q1 + q2;
                const double depth = 1.0 / sum_q;

                const std::size_t pix = static_cast<std::size_t>(y) * cam.width + x;
                const bool wins =
                    depth < out.depth[pix] ||
                    (depth == out.depth[pix] && t < out.frags[pix].tri);
                if (!wins)
                    continue;

                FragInfo frag;
                frag.tri = t;
                frag.w[0] = q0 * depth;
                frag.w[1] = q1 * depth;
                frag.w[2] = q2 * depth;
                out.depth[pix] = depth;
                out.coverage[pix] = 1;
                out.frags[pix] = frag;
                for (int ch = 0; ch < 3; ++ch)
                {
                    double value = 0.0;
                    if (has_color)
                        for (int i = 0; i < 3; ++i)
                            value += frag.w[i] *
                                     mesh.albedo(tri[static_cast<std::size_t>(i)], ch);
                    out.color[pix * 3 + ch] = value;
                }
            }
    }
    return out;
}

void render_frozen(const Mesh& mesh, const CameraIntrinsics& cam, const RenderOutput& ref,
                   std::vector<double>& color, std::vector<double>& depth)
{
    const bool has_color = mesh.albedo.rows() == mesh.vertices.rows();
    color.assign(ref.pixel_count() * 3, 0.0);
    depth.assign(ref.pixel_count(), kDepthInfinity);

    for (std::size_t pix = 0; pix < ref.pixel_count(); ++pix)
    {
        if (!ref.coverage[pix])
            continue;
        const FragInfo& frag = ref.frags[pix];
        const Triangle& tri = (*mesh.triangles)[static_cast<std::size_t>(frag.tri)];
        const double sx = static_cast<double>(pix % static_cast<std::size_t>(ref.width));
        const double sy = static_cast<double>(pix / static_cast<std::size_t>(ref.width));

        Vec2 p[3];
        double z[3];
        for (int i = 0; i < 3; ++i)
        {
            const Vec3 v = mesh.vertices.row(tri[static_cast<std::size_t>(i)]);
            z[i] = v.z();
            p[i] = project(cam, v);
        }
        const double e0 = edge_fn(p[1], p[2], sx, sy);
        const double e1 = edge_fn(p[2], p[0], sx, sy);
        const double e2 = edge_fn(p[0], p[1], sx, sy);
        const double area = e0 + e1 + e2;
        const double q0 = e0 / (area * z[0]);
        const double q1 = e1 / (area * z[1]);
        const double q2 = e2 / (area * z[2]);
        const double sum_q = q0 + q1 + q2;
        depth[pix] = 1.0 / sum_q;
        if (has_color)
            for (int ch = 0; ch < 3; ++ch)
                color[pix * 3 + ch] = (q0 * mesh.albedo(tri[0], ch) +
                                       q1 * mesh.albedo(tri[1], ch) +
                                       q2 * mesh.albedo(tri[2], ch)) /
                                      sum_q;
    }
}

RenderGrads render_backward(const Mesh& mesh, const CameraIntrinsics& cam,
                            const RenderOutput& out, const std::vector<double>& d_color,
                            const std::vector<double>& d_depth)
{
    if (!d_color.empty() && d_color.size() != out.pixel_count() * 3)
        throw ValidationError("render_backward: color gradient shape mismatch");
    if (!d_depth.empty() && d_depth.size() != out.pixel_count())
        throw ValidationError("render_backward: depth gradient shape mismatch");

    const Eigen::Index n = mesh.vertices.rows();
    RenderGrads grads;
    grads.d_vertices = MatN3::Zero(n, 3);
    grads.d_attributes = MatN3::Zero(n, 3);
    const bool has_color = mesh.albedo.rows() == n;

    for (std::size_t pix = 0; pix < out.pixel_count(); ++pix)
    {
        if (!out.coverage[pix])
            continue;
        const double gd = d_depth.empty() ? 0.0 : d_depth[pix];
        Vec3 gc = Vec3::Zero();
        if (!d_color.empty())
            gc = Vec3(d_color[pix * 3], d_color[pix * 3 + 1], d_color[pix * 3 + 2]);
        if (gd == 0.0 && gc.isZero())
            continue;

        const FragInfo& frag = out.frags[pix];
        const Triangle& tri = (*mesh.triangles)[static_cast<std::size_t>(frag.tri)];
        const double sx = static_cast<double>(pix % static_cast<std::size_t>(out.width));
        const double sy = static_cast<double>(pix / static_cast<std::size_t>(out.width));

        Vec2 p[3];
        double z[3];
        Vec3 attr[3];
        for (int i = 0; i < 3; ++i)
        {
            const Vec3 v = mesh.vertices.row(tri[static_cast<std::size_t>(i)]);
            z[i] = v.z();
            p[i] = project(cam, v);
            attr[i] = has_color ? Vec3(mesh.albedo.row(tri[static_cast<std::size_t>(i)]))
                                : Vec3::Zero();
        }
        const double e[3] = {edge_fn(p[1], p[2], sx, sy), edge_fn(p[2], p[0], sx, sy),
                             edge_fn(p[0], p[1], sx, sy)};
        const double area = e[0] + e[1] + e[2];
        const double q[3] = {e[0] / (area * z[0]), e[1] / (area * z[1]),
                             e[2] / (area * z[2])};
        const double sum_q = q[0] + q[1] + q[2];
        const double depth = 1.0 / sum_q;
        const Vec3 color = (q[0] * attr[0] + q[1] * attr[1] + q[2] * attr[2]) * depth;

        // Attribute gradient: color = sum_i w_i attr_i with w_i = q_i/sum_q.
        if (has_color)
            for (int i = 0; i < 3; ++i)
                grads.d_attributes.row(tri[static_cast<std::size_t>(i)]) +=
                    (q[i] * depth) * gc;

        // dL/dq_i collects the color quotient rule and the depth term
        // (depth = 1/sum_q up to the area factor folded into q).
        double dq[3];
        for (int i = 0; i < 3; ++i)
            dq[i] = (gc.dot(attr[i]) - gc.dot(color)) * depth - gd * depth * depth;

        // q_i = e_i / (area * z_i), area = e_0 + e_1 + e_2.
        double de[3];
        double dz[3];
        {
            double d_area = 0.0;
            for (int i = 0; i < 3; ++i)
                d_area += dq[i] * (-q[i] / area);
            for (int i = 0; i < 3; ++i)
            {
                de[i] = dq[i] / (area * z[i]) + d_area;
                dz[i] = -dq[i] * q[i] / z[i];
            }
        }

        // e_i = edge_fn(p_j, p_k, s) for (i, j, k) cyclic.
        Vec2 dp[3] = {Vec2::Zero(), Vec2::Zero(), Vec2::Zero()};
        for (int i = 0; i < 3; ++i)
        {
            const int j = (i + 1) % 3;
            const int k = (i + 2) % 3;
            // dE/d(first) = (b.y - s.y, s.x - b.x); dE/d(second) = (s.y - a.y, a.x - s.x).
            dp[j] += de[i] * Vec2(p[k].y() - sy, sx - p[k].x());
            dp[k] += de[i] * Vec2(sy - p[j].y(), p[j].x() - sx);
        }

        // Projection: u = fx x/z + cx, v = fy y/z + cy.
        for (int i = 0; i < 3; ++i)
        {
            const auto row = tri[static_cast<std::size_t>(i)];
            const Vec3 vert = mesh.vertices.row(row);
            grads.d_vertices(row, 0) += dp[i].x() * cam.fx / z[i];
            grads.d_vertices(row, 1) += dp[i].y() * cam.fy / z[i];
            grads.d_vertices(row, 2) += dz[i] -
                                        dp[i].x() * cam.fx * vert.x() / (z[i] * z[i]) -
                                        dp[i].y() * cam.fy * vert.y() / (z[i] * z[i]);
        }
    }
    return grads;
}

void write_render_debug(const RenderOutput& out, const std::string& color_png,
                        const std::string& depth_png)
{
    ImageRGB8 color;
    color.width = out.width;
    color.height = out.height;
    color.data.resize(out.pixel_count() * 3);
    for (std::size_t i = 0; i < out.pixel_count() * 3; ++i)
        color.data[i] = static_cast<std::uint8_t>(
            std::lround(std::clamp(out.color[i], 0.0, 1.0) * 255.0));

    ImageGray16 depth;
    depth.width = out.width;
    depth.height = out.height;
    depth.data.resize(out.pixel_count());
    for (std::size_t i = 0; i < out.pixel_count(); ++i)
        depth.data[i] =
            out.coverage[i]
                ? static_cast<std::uint16_t>(
                      std::clamp(std::lround(out.depth[i] * 1000.0), 0l, 65535l))
                : 0;

    write_png(color_png, color);
    write_png(depth_png, depth);
}

} // namespace facefit
