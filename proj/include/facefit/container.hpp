/*
 * facefit - multi-view RGB-D 4D face reconstruction in modern C++.
 *
 * File: include/facefit/container.hpp
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

#include "facefit/model.hpp"
#include "facefit/types.hpp"

#include <string>
#include <vector>

namespace facefit {

/**
 * On-disk formats. A container is a directory holding a JSON manifest plus
 * one binary blob of concatenated row-major little-endian float32 arrays.
 * Numeric state is kept in double precision in memory and narrowed to f32
 * on save, so save -> load -> save reproduces the files byte for byte.
 */

inline constexpr int kContainerFormatVersion = 1;

/** Writes model.json and model.bin under dir, creating it if needed. */
void save_model(const MorphableModel& model, const std::string& dir);

/**
 * Reads a model container. Throws IoError when files are unreadable and
 * ValidationError on manifest defects: unknown container version, a missing
 * array, a declared shape that contradicts the dims table (named after the
 * offending array), or a blob length mismatch.
 */
MorphableModel load_model(const std::string& dir);

/**
 * A reconstructed (or ground-truth) performance: per-frame surfaces, the
 * residual offset fields that produced them, and the per-frame parameter
 * table. Offsets and params may be empty when only geometry is known.
 */
struct FaceSequence
{
    int vertex_count = 0;
    double fps = 30.0;
    std::vector<MatN3> vertices;          ///< one n x 3 matrix per frame
    std::vector<MatN3> offsets;           ///< empty, or one n x 3 matrix per frame
    std::vector<FaceParams> params;       ///< empty, or one entry per frame
    std::shared_ptr<const TriangleList> triangles; ///< optional topology for export

    int frame_count() const { return static_cast<int>(vertices.size()); }
};

/** Writes seq.json and seq.bin under dir, plus frame_000000.obj when topology is present. */
void save_sequence(const FaceSequence& seq, const std::string& dir);

/** Reads a sequence container; same error contract as load_model. */
FaceSequence load_sequence(const std::string& dir);

} // namespace facefit
