/*
 * facefit - multi-view RGB-D 4D face reconstruction in modern C++.
 *
 * File: src/model.cpp
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
#include "facefit/model.hpp"

#include "facefit/error.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace facefit {

namespace {

// Reshapes a stacked (3n) vector into an n x 3 matrix using the row
// convention index = 3*vertex + coordinate.
MatN3 unstack(const VecX& stacked)
{
    const auto n = static_cast<int>(stacked.size() / 3);
    MatN3 out(n, 3);
    for (int v = 0; v < n; ++v)
        for (int c = 0; c < 3; ++c)
            out(v, c) = stacked[3 * v + c];
    return out;
}

VecX stack(const MatN3& field)
{
    VecX out(field.rows() * 3);
    for (int v = 0; v < field.rows(); ++v)
        for (int c = 0; c < 3; ++c)
            out[3 * v + c] = field(v, c);
    return out;
}

void check_basis(const MatX& basis, int vertex_count, const char* name)
{
    if (basis.rows() != 3 * static_cast<Eigen::Index>(vertex_count))
    {
        std::ostringstream msg;
        msg << name << ": expected " << 3 * vertex_count << " rows, got " << basis.rows();
        throw ValidationError(msg.str());
    }
}

} // namespace

void MorphableModel::validate() const
{
    if (vertex_count < 3)
        throw ValidationError("vertex_count: must be at least 3");
    if (mean_shape.rows() != vertex_count)
        throw ValidationError("mean_shape: row count does not match vertex_count");
    check_basis(identity_basis, vertex_count, "identity_basis");
    check_basis(expression_basis, vertex_count, "expression_basis");
    if (texture_mean.rows() != vertex_count)
        throw ValidationError("texture_mean: row count does not match vertex_count");
    check_basis(texture_basis, vertex_count, "texture_basis");
    if (!triangles || triangles->empty())
        throw ValidationError("triangles: missing or empty");
    for (const auto& tri : *triangles)
        for (int idx : tri)
            if (idx < 0 || idx >= vertex_count)
                throw ValidationError("triangles: vertex index out of range");
    for (int idx : landmark_indices)
        if (idx < 0 || idx >= vertex_count)
            throw ValidationError("landmark_indices: vertex index out of range");
    for (const char* required : {"lip", "upper", "face"})
        if (regions.find(required) == regions.end())
            throw ValidationError(std::string("regions: missing required region \"") + required +
                                  "\"");
    for (const auto& [name, indices] : regions)
        for (int idx : indices)
            if (idx < 0 || idx >= vertex_count)
                throw ValidationError("regions: vertex index out of range in \"" + name + "\"");
}

const std::vector<int>& MorphableModel::region(const std::string& name) const
{
    const auto it = regions.find(name);
    if (it == regions.end())
        throw ValidationError("regions: unknown region \"" + name + "\"");
    return it->second;
}

FaceParams FaceParams::zeros(const MorphableModel& model, const std::vector<int>& camera_ids)
{
    FaceParams p;
    p.alpha = VecX::Zero(model.k_id());
    p.beta = VecX::Zero(model.k_exp());
    p.delta = VecX::Zero(model.k_tex());
    for (int id : camera_ids)
        p.gamma[id] = VecX::Zero(27);
    return p;
}

VertexOffsets VertexOffsets::zeros(int vertex_count)
{
    VertexOffsets o;
    o.offsets = MatN3::Zero(vertex_count, 3);
    return o;
}

Mesh assemble_face(const MorphableModel& model, const FaceParams& params,
                   const VertexOffsets& offsets)
{
    if (params.alpha.size() != model.k_id())
        throw ValidationError("alpha: expected " + std::to_string(model.k_id()) +
                              " coefficients, got " + std::to_string(params.alpha.size()));
    if (params.beta.size() != model.k_exp())
        throw ValidationError("beta: expected " + std::to_string(model.k_exp()) +
                              " coefficients, got " + std::to_string(params.beta.size()));
    if (offsets.offsets.rows() != model.vertex_count)
        throw ValidationError("offsets: expected " + std::to_string(model.vertex_count) +
                              " rows, got " + std::to_string(offsets.offsets.rows()));

    Mesh mesh;
    mesh.vertices = model.mean_shape + unstack(model.identity_basis * params.alpha) +
                    unstack(model.expression_basis * params.beta) + offsets.offsets;
    mesh.triangles = model.triangles;
    return mesh;
}

MatN3 face_albedo(const MorphableModel& model, const VecX& delta)
{
    if (delta.size() != model.k_tex())
        throw ValidationError("delta: expected " + std::to_string(model.k_tex()) +
                              " coefficients, got " + std::to_string(delta.size()));
    MatN3 albedo = model.texture_mean + unstack(model.texture_basis * delta);
    return albedo.cwiseMax(0.0).cwiseMin(1.0);
}

VecX basis_coefficient_gradient(const MatX& basis, const MatN3& d_vertices)
{
    return basis.transpose() * stack(d_vertices);
}

VecX face_albedo_backward(const MorphableModel& model, const VecX& delta, const MatN3& d_albedo)
{
    // The clamp has zero subgradient where it saturates; mask before the
    // transpose product.
    const MatN3 raw = model.texture_mean + unstack(model.texture_basis * delta);
    MatN3 masked = d_albedo;
    for (int v = 0; v < raw.rows(); ++v)
        for (int c = 0; c < 3; ++c)
            if (raw(v, c) < 0.0 || raw(v, c) > 1.0)
                masked(v, c) = 0.0;
    return model.texture_basis.transpose() * stack(masked);
}

MeshTopology MeshTopology::build(const TriangleList& triangles, int vertex_count)
{
    std::set<std::array<std::int32_t, 2>> edge_set;
    for (const auto& tri : triangles)
    {
        for (int e = 0; e < 3; ++e)
        {
            std::int32_t a = tri[e];
            std::int32_t b = tri[(e + 1) % 3];
            if (a > b)
                std::swap(a, b);
            edge_set.insert({a, b});
        }
    }
    MeshTopology topo;
    topo.edges.assign(edge_set.begin(), edge_set.end());
    topo.neighbors.assign(static_cast<std::size_t>(vertex_count), {});
    for (const auto& [a, b] : topo.edges)
    {
        topo.neighbors[static_cast<std::size_t>(a)].push_back(b);
        topo.neighbors[static_cast<std::size_t>(b)].push_back(a);
    }
    for (auto& ring : topo.neighbors)
        std::sort(ring.begin(), ring.end());
    return topo;
}

} // namespace facefit
