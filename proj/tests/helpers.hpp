/*
 * facefit - multi-view RGB-D 4D face reconstruction in modern C++.
 *
 * File: tests/helpers.hpp
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
#include "facefit/rng.hpp"
#include "facefit/types.hpp"

#include <memory>
#include <numeric>
#include <vector>

namespace facefit::testing {

/// Fills a matrix with standard normal draws from the given stream.
inline MatX random_matrix(Rng& rng, int rows, int cols)
{
    MatX m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            m(r, c) = rng.normal();
    return m;
}

inline VecX random_vector(Rng& rng, int size)
{
    VecX v(size);
    for (int i = 0; i < size; ++i)
        v[i] = rng.normal();
    return v;
}

/**
 * A structurally valid model with dense random entries. Not a plausible
 * face; intended for algebraic identities where only shapes matter. The
 * triangle fan keeps every vertex referenced.
 */
inline MorphableModel random_model(int n, int k, std::uint64_t seed)
{
    Rng rng(seed);
    MorphableModel model;
    model.vertex_count = n;
    model.mean_shape = random_matrix(rng, n, 3);
    model.identity_basis = random_matrix(rng, 3 * n, k);
    model.expression_basis = random_matrix(rng, 3 * n, k);
    model.texture_mean = (random_matrix(rng, n, 3) * 0.1).array() + 0.5;
    model.texture_basis = random_matrix(rng, 3 * n, k);

    auto tris = std::make_shared<TriangleList>();
    for (int v = 1; v + 1 < n; ++v)
        tris->push_back({0, v, v + 1});
    model.triangles = tris;

    model.landmark_indices.resize(static_cast<std::size_t>(std::min(n, 10)));
    std::iota(model.landmark_indices.begin(), model.landmark_indices.end(), 0);

    std::vector<int> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), 0);
    model.regions["face"] = all;
    model.regions["lip"] = {0, 1, 2};
    model.regions["upper"] = {n - 1, n - 2, n - 3};
    return model;
}

} // namespace facefit::testing
