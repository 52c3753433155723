/*
 * facefit - multi-view RGB-D 4D face reconstruction in modern C++.
 *
 * File: src/shading.cpp
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

#include <cmath>

namespace facefit {

namespace {

// Real spherical harmonics constants (Condon-Shortley-free), 12 digits:
//   k0 = 1/(2 sqrt(pi)), k1 = sqrt(3/(4 pi)), k2 = sqrt(15/(4 pi)),
//   k3 = sqrt(5/(16 pi)), k4 = sqrt(15/(16 pi)).
constexpr double kSh0 = 0.282094791774;
constexpr double kSh1 = 0.488602511903;
constexpr double kSh2 = 1.092548430592;
constexpr double kSh3 = 0.315391565253;
constexpr double kSh4 = 0.546274215296;

// dY_k/dn rows for the 9 basis functions.
Eigen::Matrix<double, 9, 3> sh_basis_jacobian(const Vec3& n)
{
    const double x = n.x(), y = n.y(), z = n.z();
    Eigen::Matrix<double, 9, 3> jac;
    jac.row(0) << 0, 0, 0;
    jac.row(1) << 0, kSh1, 0;
    jac.row(2) << 0, 0, kSh1;
    jac.row(3) << kSh1, 0, 0;
    jac.row(4) << kSh2 * y, kSh2 * x, 0;
    jac.row(5) << 0, kSh2 * z, kSh2 * y;
    jac.row(6) << 0, 0, kSh3 * 6 * z;
    jac.row(7) << kSh2 * z, 0, kSh2 * x;
    jac.row(8) << kSh4 * 2 * x, -kSh4 * 2 * y, 0;
    return jac;
}

void check_unit_normals(const MatN3& normals)
{
    for (int v = 0; v < normals.rows(); ++v)
    {
        const double norm = normals.row(v).norm();
        if (std::abs(norm - 1.0) > 1e-3)
            throw ValidationError("sh_shade: normal " + std::to_string(v) +
                                  " is not unit length");
    }
}

} // namespace

Eigen::Matrix<double, 9, 1> sh_basis(const Vec3& n)
{
    const double x = n.x(), y = n.y(), z = n.z();
    Eigen::Matrix<double, 9, 1> sh;
    sh[0] = kSh0;
    sh[1] = kSh1 * y;
    sh[2] = kSh1 * z;
    sh[3] = kSh1 * x;
    sh[4] = kSh2 * x * y;
    sh[5] = kSh2 * y * z;
    sh[6] = kSh3 * (3.0 * z * z - 1.0);
    sh[7] = kSh2 * x * z;
    sh[8] = kSh4 * (x * x - y * y);
    return sh;
}

MatN3 vertex_normals(const MatN3& vertices, const TriangleList& triangles)
{
    MatN3 accum = MatN3::Zero(vertices.rows(), 3);
    for (const auto& tri : triangles)
    {
        const Vec3 p0 = vertices.row(tri[0]);
        const Vec3 cross =
            (Vec3(vertices.row(tri[1])) - p0).cross(Vec3(vertices.row(tri[2])) - p0);
        for (const auto v : tri)
            accum.row(v) += cross;
    }
    for (int v = 0; v < accum.rows(); ++v)
    {
        const double norm = accum.row(v).norm();
        if (norm < 1e-15)
            throw NumericalError("vertex_normals: degenerate normal at vertex " +
                                 std::to_string(v));
        accum.row(v) /= norm;
    }
    return accum;
}

MatN3 vertex_normals_backward(const MatN3& vertices, const TriangleList& triangles,
                              const MatN3& d_normals)
{
    if (d_normals.rows() != vertices.rows())
        throw ValidationError("vertex_normals_backward: gradient shape mismatch");

    // Recompute the pre-normalization accumulators.
    MatN3 accum = MatN3::Zero(vertices.rows(), 3);
    for (const auto& tri : triangles)
    {
        const Vec3 p0 = vertices.row(tri[0]);
        const Vec3 cross =
            (Vec3(vertices.row(tri[1])) - p0).cross(Vec3(vertices.row(tri[2])) - p0);
        for (const auto v : tri)
            accum.row(v) += cross;
    }

    // Through normalization: d_accum = (I - n n^T)/|accum| * d_normal.
    MatN3 d_accum(vertices.rows(), 3);
    for (int v = 0; v < vertices.rows(); ++v)
    {
        const Vec3 a = accum.row(v);
        const double norm = a.norm();
        if (norm < 1e-15)
            throw NumericalError("vertex_normals_backward: degenerate normal at vertex " +
                                 std::to_string(v));
        const Vec3 n = a / norm;
        const Vec3 g = d_normals.row(v);
        d_accum.row(v) = (g - n * n.dot(g)) / norm;
    }

    // Through the cross products: for c = u x w with u = p1-p0, w = p2-p0,
    // dL/du = w x g, dL/dw = g x u.
    MatN3 d_vertices = MatN3::Zero(vertices.rows(), 3);
    for (const auto& tri : triangles)
    {
        const Vec3 p0 = vertices.row(tri[0]);
        const Vec3 u = Vec3(vertices.row(tri[1])) - p0;
        const Vec3 w = Vec3(vertices.row(tri[2])) - p0;
        const Vec3 g = Vec3(d_accum.row(tri[0])) + Vec3(d_accum.row(tri[1])) +
                       Vec3(d_accum.row(tri[2]));
        const Vec3 du = w.cross(g);
        const Vec3 dw = g.cross(u);
        d_vertices.row(tri[1]) += du;
        d_vertices.row(tri[2]) += dw;
        d_vertices.row(tri[0]) -= du + dw;
    }
    return d_vertices;
}

MatN3 sh_shade(const MatN3& albedo, const MatN3& normals, const ShadingParams& shading)
{
    if (albedo.rows() != normals.rows())
        throw ValidationError("sh_shade: albedo/normal row mismatch");
    if (shading.gamma.size() != 27)
        throw ValidationError("sh_shade: gamma must have 27 coefficients");
    check_unit_normals(normals);

    MatN3 shaded(albedo.rows(), 3);
    for (int v = 0; v < albedo.rows(); ++v)
    {
        const auto sh = sh_basis(normals.row(v));
        for (int c = 0; c < 3; ++c)
            shaded(v, c) = albedo(v, c) * shading.gamma.segment<9>(9 * c).dot(sh);
    }
    return shaded;
}

ShadeGrads sh_shade_backward(const MatN3& albedo, const MatN3& normals,
                             const ShadingParams& shading, const MatN3& d_shaded)
{
    if (d_shaded.rows() != albedo.rows())
        throw ValidationError("sh_shade_backward: gradient shape mismatch");

    ShadeGrads grads;
    grads.d_albedo = MatN3::Zero(albedo.rows(), 3);
    grads.d_normals = MatN3::Zero(albedo.rows(), 3);
    grads.d_gamma = VecX::Zero(27);

    for (int v = 0; v < albedo.rows(); ++v)
    {
        const Vec3 n = normals.row(v);
        const auto sh = sh_basis(n);
        const auto jac = sh_basis_jacobian(n);
        for (int c = 0; c < 3; ++c)
        {
            const auto gamma_c = shading.gamma.segment<9>(9 * c);
            const double g = d_shaded(v, c);
            grads.d_albedo(v, c) = g * gamma_c.dot(sh);
            grads.d_gamma.segment<9>(9 * c) += g * albedo(v, c) * sh;
            grads.d_normals.row(v) +=
                g * albedo(v, c) * (jac.transpose() * gamma_c).transpose();
        }
    }
    return grads;
}

} // namespace facefit
