/*
 * facefit - multi-view RGB-D 4D face reconstruction in modern C++.
 *
 * File: include/facefit/model.hpp
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

#include "facefit/types.hpp"

#include <map>
#include <memory>
#include <string>
#include <vector>

namespace facefit {

/**
 * A linear statistical face model: mean shape plus identity, expression and
 * texture bases. Basis matrices are (3n) x k with row index 3*v + c for
 * vertex v and coordinate c, so column j reshapes to an n x 3 per-vertex
 * field. Immutable after load; safe to share read-only across workers.
 */
struct MorphableModel
{
    int vertex_count = 0;
    MatN3 mean_shape;      ///< n x 3, model units (face bounding-box diagonal ~ 1).
    MatX identity_basis;   ///< 3n x k_id
    MatX expression_basis; ///< 3n x k_exp
    MatN3 texture_mean;    ///< n x 3 albedo in [0, 1].
    MatX texture_basis;    ///< 3n x k_tex
    std::shared_ptr<const TriangleList> triangles;
    std::vector<int> landmark_indices;
    std::map<std::string, std::vector<int>> regions; ///< must include "lip", "upper", "face".

    int k_id() const { return static_cast<int>(identity_basis.cols()); }
    int k_exp() const { return static_cast<int>(expression_basis.cols()); }
    int k_tex() const { return static_cast<int>(texture_basis.cols()); }

    /** Checks the structural invariants; throws ValidationError naming the offending field. */
    void validate() const;

    const std::vector<int>& region(const std::string& name) const;
};

/** The per-frame optimization variables of the parametric face. */
struct FaceParams
{
    VecX alpha; ///< identity coefficients, k_id
    VecX beta;  ///< expression coefficients, k_exp
    VecX delta; ///< texture coefficients, k_tex
    /// Spherical-harmonics lighting, 9 coefficients x 3 channels, keyed by camera id.
    std::map<int, VecX> gamma;

    static FaceParams zeros(const MorphableModel& model, const std::vector<int>& camera_ids);
};

/** Per-vertex residual deformation beyond the model span. */
struct VertexOffsets
{
    MatN3 offsets; ///< n x 3, model units.

    static VertexOffsets zeros(int vertex_count);
};

/** A posed face surface; topology is shared with the source model. */
struct Mesh
{
    MatN3 vertices;
    std::shared_ptr<const TriangleList> triangles;
    MatN3 albedo; ///< optional per-vertex color in [0,1]; empty when unused.
};

/**
 * Assembles the face surface:
 *   vertices = mean_shape + reshape(identity_basis * alpha)
 *            + reshape(expression_basis * beta) + offsets.
 * Exactly linear in all inputs. Throws ValidationError on dimension
 * mismatch, naming the offending field.
 */
Mesh assemble_face(const MorphableModel& model, const FaceParams& params,
                   const VertexOffsets& offsets);

/**
 * Per-vertex albedo: texture_mean + reshape(texture_basis * delta), clamped
 * to [0, 1] after the affine map.
 */
MatN3 face_albedo(const MorphableModel& model, const VecX& delta);

/** Gradient of the assembled vertices with respect to a basis coefficient vector. */
VecX basis_coefficient_gradient(const MatX& basis, const MatN3& d_vertices);

/**
 * Backward companion of face_albedo: propagates a per-vertex albedo gradient
 * to the texture coefficients, zeroing components where the clamp is active.
 */
VecX face_albedo_backward(const MorphableModel& model, const VecX& delta, const MatN3& d_albedo);

/** Derived connectivity used by the regularizers; built once per topology. */
struct MeshTopology
{
    /// Unique undirected edges (a < b), lexicographically sorted.
    std::vector<std::array<std::int32_t, 2>> edges;
    /// Per-vertex one-ring neighborhoods, each sorted ascending.
    std::vector<std::vector<std::int32_t>> neighbors;

    static MeshTopology build(const TriangleList& triangles, int vertex_count);
};

} // namespace facefit
