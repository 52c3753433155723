/*
 * facefit - multi-view RGB-D 4D face reconstruction in modern C++.
 *
 * File: src/synth_model.cpp
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
#include "facefit/synth_model.hpp"

#include "facefit/error.hpp"
#include "facefit/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace facefit {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Latitude-band layout of the sphere: interior vertices split into rows,
// counts apportioned by sin(theta) weight so triangles stay near-uniform.
std::vector<int> row_counts(int interior, int rows)
{
    std::vector<double> weights(static_cast<std::size_t>(rows));
    double total = 0.0;
    for (int r = 0; r < rows; ++r)
    {
        weights[static_cast<std::size_t>(r)] = std::sin(kPi * (r + 1) / (rows + 1));
        total += weights[static_cast<std::size_t>(r)];
    }
    std::vector<int> counts(static_cast<std::size_t>(rows));
    std::vector<double> remainders(static_cast<std::size_t>(rows));
    int assigned = 0;
    for (int r = 0; r < rows; ++r)
    {
        const double quota = interior * weights[static_cast<std::size_t>(r)] / total;
        counts[static_cast<std::size_t>(r)] = std::max(3, static_cast<int>(quota));
        remainders[static_cast<std::size_t>(r)] =
            quota - static_cast<int>(quota);
        assigned += counts[static_cast<std::size_t>(r)];
    }
    // Largest-remainder correction, keeping every row at 3 or more.
    while (assigned < interior)
    {
        int best = 0;
        for (int r = 1; r < rows; ++r)
            if (remainders[static_cast<std::size_t>(r)] >
                remainders[static_cast<std::size_t>(best)])
                best = r;
        ++counts[static_cast<std::size_t>(best)];
        remainders[static_cast<std::size_t>(best)] -= 1.0;
        ++assigned;
    }
    while (assigned > interior)
    {
        int best = -1;
        for (int r = 0; r < rows; ++r)
            if (counts[static_cast<std::size_t>(r)] > 3 &&
                (best < 0 || remainders[static_cast<std::size_t>(r)] <
                                 remainders[static_cast<std::size_t>(best)]))
                best = r;
        --counts[static_cast<std::size_t>(best)];
        remainders[static_cast<std::size_t>(best)] += 1.0;
        --assigned;
    }
    return counts;
}

// Triangulates the band between two full latitude rings of unequal size by
// walking both in angle order; produces countA + countB triangles and a
// consistent orientation with the pole fans.
void stitch_band(TriangleList& tris, int base_a, int count_a, int base_b, int count_b)
{
    int i = 0, j = 0;
    while (i < count_a || j < count_b)
    {
        const double next_a = static_cast<double>(i + 1) / count_a;
        const double next_b = static_cast<double>(j + 1) / count_b;
        const int ai = base_a + (i % count_a);
        const int bj = base_b + (j % count_b);
        if (i < count_a && (j >= count_b || next_a <= next_b))
        {
            tris.push_back({ai, bj, base_a + ((i + 1) % count_a)});
            ++i;
        }
        else
        {
            tris.push_back({ai, bj, base_b + ((j + 1) % count_b)});
            ++j;
        }
    }
}

int nearest_direction(const std::vector<Vec3>& dirs, const Vec3& target,
                      const std::vector<int>& taken)
{
    int best = -1;
    double best_dot = -2.0;
    for (int v = 0; v < static_cast<int>(dirs.size()); ++v)
    {
        if (std::find(taken.begin(), taken.end(), v) != taken.end())
            continue;
        const double d = dirs[static_cast<std::size_t>(v)].dot(target);
        if (d > best_dot)
        {
            best_dot = d;
            best = v;
        }
    }
    return best;
}

std::vector<int> cap_region(const std::vector<Vec3>& dirs, const Vec3& center,
                            double min_dot)
{
    std::vector<int> out;
    for (int v = 0; v < static_cast<int>(dirs.size()); ++v)
        if (dirs[static_cast<std::size_t>(v)].dot(center) >= min_dot)
            out.push_back(v);
    if (out.size() < 3)
    {
        // Too coarse a mesh for the cap: fall back to the 3 best-aligned vertices.
        std::vector<int> all(dirs.size());
        std::iota(all.begin(), all.end(), 0);
        std::sort(all.begin(), all.end(), [&](int a, int b) {
            return dirs[static_cast<std::size_t>(a)].dot(center) >
                   dirs[static_cast<std::size_t>(b)].dot(center);
        });
        out.assign(all.begin(), all.begin() + 3);
        std::sort(out.begin(), out.end());
    }
    return out;
}

MatX smoothed_random_field(Rng& rng, int n, int cols,
                           const std::vector<std::vector<std::int32_t>>& neighbors,
                           int passes)
{
    MatX field(n, cols);
    for (int c = 0; c < cols; ++c)
        for (int v = 0; v < n; ++v)
            field(v, c) = rng.normal();
    umbrella_smooth(field, neighbors, passes);
    return field;
}

// Two rounds of modified Gram-Schmidt; the second pass scrubs the residual
// non-orthogonality of the first down to machine precision.
void orthonormalize_columns(MatX& basis)
{
    for (int pass = 0; pass < 2; ++pass)
        for (Eigen::Index j = 0; j < basis.cols(); ++j)
        {
            for (Eigen::Index i = 0; i < j; ++i)
                basis.col(j) -= basis.col(i).dot(basis.col(j)) * basis.col(i);
            const double norm = basis.col(j).norm();
            if (norm < 1e-12)
                throw NumericalError("synth_model: degenerate basis column");
            basis.col(j) /= norm;
        }
}

// Builds one basis: per-coordinate smooth random fields stacked into 3n x k,
// orthonormalized, then scaled to the requested per-column magnitude.
MatX make_basis(Rng& rng, int n, int k,
                const std::vector<std::vector<std::int32_t>>& neighbors, double scale)
{
    MatX basis(3 * n, k);
    for (int j = 0; j < k; ++j)
    {
        const MatX field = smoothed_random_field(rng, n, 3, neighbors, 10);
        for (int v = 0; v < n; ++v)
            for (int c = 0; c < 3; ++c)
                basis(3 * v + c, j) = field(v, c);
    }
    orthonormalize_columns(basis);
    basis *= scale;
    return basis;
}

} // namespace

void umbrella_smooth(MatX& field, const std::vector<std::vector<std::int32_t>>& neighbors,
                     int passes)
{
    MatX next = field;
    for (int p = 0; p < passes; ++p)
    {
        for (int v = 0; v < field.rows(); ++v)
        {
            const auto& ring = neighbors[static_cast<std::size_t>(v)];
            if (ring.empty())
                continue;
            for (int c = 0; c < field.cols(); ++c)
            {
                double acc = 0.0;
                for (const std::int32_t u : ring)
                    acc += field(u, c);
                next(v, c) = 0.5 * field(v, c) + 0.5 * acc / static_cast<double>(ring.size());
            }
        }
        field.swap(next);
    }
}

MorphableModel synth_model(std::uint64_t seed, int n, int k_id, int k_exp, int k_tex)
{
    if (n < 12)
        throw ValidationError("vertex count too small: need at least 12, got " +
                              std::to_string(n));
    if (k_id < 1 || k_exp < 1 || k_tex < 1)
        throw ValidationError("basis dims: must be positive");
    if (std::max({k_id, k_exp, k_tex}) > 3 * n)
        throw ValidationError("basis dims: cannot exceed 3 * vertex count");

    // --- sphere layout: poles + sin-weighted latitude rows -------------------
    const int interior = n - 2;
    int rows = std::max(2, static_cast<int>(std::lround(std::sqrt(interior / 2.0))));
    rows = std::min(rows, interior / 3);
    const std::vector<int> counts = row_counts(interior, rows);

    std::vector<Vec3> dirs(static_cast<std::size_t>(n));
    dirs[0] = Vec3(0, 1, 0); // north pole
    std::vector<int> row_base(static_cast<std::size_t>(rows));
    int cursor = 1;
    for (int r = 0; r < rows; ++r)
    {
        row_base[static_cast<std::size_t>(r)] = cursor;
        const double theta = kPi * (r + 1) / (rows + 1);
        const int count = counts[static_cast<std::size_t>(r)];
        for (int j = 0; j < count; ++j)
        {
            const double phi = 2.0 * kPi * j / count;
            dirs[static_cast<std::size_t>(cursor++)] =
                Vec3(std::sin(theta) * std::sin(phi), std::cos(theta),
                     std::sin(theta) * std::cos(phi));
        }
    }
    dirs[static_cast<std::size_t>(n - 1)] = Vec3(0, -1, 0); // south pole

    auto tris = std::make_shared<TriangleList>();
    for (int j = 0; j < counts[0]; ++j)
        tris->push_back({0, row_base[0] + j, row_base[0] + (j + 1) % counts[0]});
    for (int r = 0; r + 1 < rows; ++r)
        stitch_band(*tris, row_base[static_cast<std::size_t>(r)],
                    counts[static_cast<std::size_t>(r)],
                    row_base[static_cast<std::size_t>(r + 1)],
                    counts[static_cast<std::size_t>(r + 1)]);
    const int last = rows - 1;
    for (int j = 0; j < counts[static_cast<std::size_t>(last)]; ++j)
        tris->push_back({n - 1,
                         row_base[static_cast<std::size_t>(last)] +
                             (j + 1) % counts[static_cast<std::size_t>(last)],
                         row_base[static_cast<std::size_t>(last)] + j});

    const MeshTopology topo = MeshTopology::build(*tris, n);

    // --- geometry: bumpy ellipsoid, face bounding box normalized to 1 --------
    Rng rng(seed);
    MatX bumps(n, 1);
    for (int v = 0; v < n; ++v)
        bumps(v, 0) = rng.normal(0.0, 0.06);
    umbrella_smooth(bumps, topo.neighbors, 10);

    const Vec3 semi_axes(0.78, 1.0, 0.82);
    MatN3 shape(n, 3);
    for (int v = 0; v < n; ++v)
    {
        const double radius = 1.0 + bumps(v, 0);
        for (int c = 0; c < 3; ++c)
            shape(v, c) = semi_axes[c] * radius * dirs[static_cast<std::size_t>(v)][c];
    }

    // Orient outward: the construction is combinatorially consistent, so a
    // negative enclosed volume means every triangle needs one flip.
    double volume6 = 0.0;
    for (const auto& t : *tris)
        volume6 += shape.row(t[0]).dot(
            Vec3(shape.row(t[1])).cross(Vec3(shape.row(t[2]))));
    if (volume6 < 0.0)
        for (auto& t : *tris)
            std::swap(t[1], t[2]);

    std::vector<int> face_region;
    for (int v = 0; v < n; ++v)
        if (dirs[static_cast<std::size_t>(v)].z() >= 0.25)
            face_region.push_back(v);
    if (face_region.size() < 3)
        face_region = cap_region(dirs, Vec3(0, 0, 1), 0.0);

    Vec3 lo = shape.row(face_region[0]);
    Vec3 hi = lo;
    for (const int v : face_region)
    {
        lo = lo.cwiseMin(Vec3(shape.row(v)));
        hi = hi.cwiseMax(Vec3(shape.row(v)));
    }
    shape /= (hi - lo).norm();

    // --- landmarks: canonical facial directions, deduplicated ----------------
    const std::vector<Vec3> landmark_dirs = {
        Vec3(-0.35, 0.30, 0.89), // eye outer left
        Vec3(0.35, 0.30, 0.89),  // eye outer right
        Vec3(0.0, 0.18, 0.98),   // nose bridge
        Vec3(0.0, -0.05, 1.0),   // nose tip
        Vec3(-0.28, -0.42, 0.86), // mouth corner left
        Vec3(0.28, -0.42, 0.86),  // mouth corner right
        Vec3(0.0, -0.35, 0.94),   // upper lip
        Vec3(0.0, -0.50, 0.87),   // lower lip
        Vec3(0.0, -0.75, 0.66),   // chin
        Vec3(0.0, 0.60, 0.80),    // forehead
    };
    std::vector<int> landmarks;
    for (const Vec3& d : landmark_dirs)
    {
        const int v = nearest_direction(dirs, d.normalized(), landmarks);
        if (v >= 0)
            landmarks.push_back(v);
    }

    // --- regions --------------------------------------------------------------
    std::map<std::string, std::vector<int>> regions;
    regions["face"] = face_region;
    regions["lip"] = cap_region(dirs, Vec3(0, -0.42, 0.91).normalized(), 0.93);
    const double bridge_y = shape(landmarks[2], 1);
    std::vector<int> upper;
    for (int v = 0; v < n; ++v)
        if (shape(v, 1) >= bridge_y)
            upper.push_back(v);
    if (upper.size() < 3)
        upper = cap_region(dirs, Vec3(0, 1, 0), 0.0);
    regions["upper"] = upper;
    regions["chin"] = cap_region(dirs, Vec3(0, -0.75, 0.66).normalized(), 0.93);
    regions["forehead"] = cap_region(dirs, Vec3(0, 0.60, 0.80).normalized(), 0.90);
    regions["cheek_left"] = cap_region(dirs, Vec3(-0.55, -0.15, 0.82).normalized(), 0.92);
    regions["cheek_right"] = cap_region(dirs, Vec3(0.55, -0.15, 0.82).normalized(), 0.92);

    // --- bases and texture ------------------------------------------------------
    MorphableModel model;
    model.vertex_count = n;
    model.mean_shape = shape;
    model.identity_basis = make_basis(rng, n, k_id, topo.neighbors, 0.16);
    model.expression_basis = make_basis(rng, n, k_exp, topo.neighbors, 0.12);

    const Vec3 skin(0.72, 0.57, 0.48);
    MatX tint = smoothed_random_field(rng, n, 3, topo.neighbors, 10);
    model.texture_mean.resize(n, 3);
    for (int v = 0; v < n; ++v)
        for (int c = 0; c < 3; ++c)
            model.texture_mean(v, c) =
                std::clamp(skin[c] + 0.08 * tint(v, c), 0.0, 1.0);
    model.texture_basis = make_basis(rng, n, k_tex, topo.neighbors, 0.25);

    model.triangles = std::move(tris);
    model.landmark_indices = std::move(landmarks);
    model.regions = std::move(regions);
    model.validate();
    return model;
}

} // namespace facefit
