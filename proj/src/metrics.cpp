/*
 * facefit - multi-view RGB-D 4D face reconstruction in modern C++.
 *
 * File: src/metrics.cpp
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
#include "facefit/metrics.hpp"

#include "facefit/error.hpp"

#include <cmath>

namespace facefit {

namespace {

const std::vector<int>& find_region(const std::map<std::string, std::vector<int>>& regions,
                                    const std::string& name, int vertex_count,
                                    const char* who)
{
    const auto it = regions.find(name);
    if (it == regions.end())
        throw ValidationError(std::string(who) + ": unknown region \"" + name + "\"");
    if (it->second.empty())
        throw ValidationError(std::string(who) + ": region \"" + name + "\" is empty");
    for (const int v : it->second)
        if (v < 0 || v >= vertex_count)
            throw ValidationError(std::string(who) + ": region \"" + name +
                                  "\" index " + std::to_string(v) + " out of range [0, " +
                                  std::to_string(vertex_count) + ")");
    return it->second;
}

// Variance below this relative level is rounding residue of the sequence-mean
// subtraction, not motion.
constexpr double kStaticTol = 1e-12;

bool is_static(const VecX& series)
{
    const double mean = series.mean();
    return (series.array() - mean).abs().maxCoeff() <=
           kStaticTol * std::max(1.0, std::abs(mean));
}

/** Pearson correlation with population moments; NaN-free by construction. */
double pearson(const VecX& a, const VecX& b)
{
    const double ma = a.mean();
    const double mb = b.mean();
    const VecX da = a.array() - ma;
    const VecX db = b.array() - mb;
    const double denom = da.norm() * db.norm();
    if (denom == 0.0)
        return 0.0;
    return da.dot(db) / denom;
}

} // namespace

void VertexSequence::validate() const
{
    if (frames.empty())
        throw ValidationError("vertex sequence: no frames");
    const Eigen::Index n = frames[0].rows();
    if (n < 1)
        throw ValidationError("vertex sequence: empty frame");
    for (std::size_t t = 1; t < frames.size(); ++t)
        if (frames[t].rows() != n)
            throw ValidationError("vertex sequence: frame " + std::to_string(t) + " has " +
                                  std::to_string(frames[t].rows()) + " vertices, expected " +
                                  std::to_string(n));
    if (fps <= 0.0)
        throw ValidationError("vertex sequence: fps must be positive");
    for (const auto& [name, indices] : regions)
        find_region(regions, name, static_cast<int>(n), "vertex sequence");
}

Axis axis_from_string(const std::string& name)
{
    if (name == "x")
        return Axis::X;
    if (name == "y")
        return Axis::Y;
    if (name == "z")
        return Axis::Z;
    if (name == "all")
        return Axis::All;
    throw ValidationError("axis: expected x, y, z or all, got \"" + name + "\"");
}

std::string to_string(Axis axis)
{
    switch (axis)
    {
    case Axis::X: return "x";
    case Axis::Y: return "y";
    case Axis::Z: return "z";
    default: return "all";
    }
}

double vertex_velocity(const VertexSequence& seq, const std::string& region, Axis axis)
{
    seq.validate();
    if (seq.frame_count() < 2)
        throw ValidationError("vertex velocity: need at least 2 frames, got " +
                              std::to_string(seq.frame_count()));
    const std::vector<int>& verts =
        find_region(seq.regions, region, seq.vertex_count(), "vertex velocity");

    if (axis == Axis::All)
    {
        return (vertex_velocity(seq, region, Axis::X) +
                vertex_velocity(seq, region, Axis::Y) +
                vertex_velocity(seq, region, Axis::Z)) /
               3.0;
    }

    const int c = axis == Axis::X ? 0 : axis == Axis::Y ? 1 : 2;
    double sum = 0.0;
    for (std::size_t t = 1; t < seq.frames.size(); ++t)
        for (const int v : verts)
            sum += std::abs(seq.frames[t](v, c) - seq.frames[t - 1](v, c));
    return sum / (static_cast<double>(seq.frames.size() - 1) *
                  static_cast<double>(verts.size()));
}

CorrelationGraph region_correlation(const VertexSequence& seq,
                                    const std::vector<std::string>& region_names,
                                    double threshold)
{
    seq.validate();
    const int frame_count = seq.frame_count();
    if (frame_count < 3)
        throw ValidationError("region correlation: need at least 3 frames, got " +
                              std::to_string(frame_count));
    if (region_names.size() < 2)
        throw ValidationError("region correlation: need at least 2 regions, got " +
                              std::to_string(region_names.size()));

    // Sequence-mean position of every vertex, the rest point displacements
    // are measured from.
    MatN3 mean_pos = MatN3::Zero(seq.vertex_count(), 3);
    for (const MatN3& frame : seq.frames)
        mean_pos += frame;
    mean_pos /= static_cast<double>(frame_count);

    CorrelationGraph graph;
    graph.regions = region_names;
    graph.self_corr.resize(region_names.size(), 0.0);
    graph.degenerate.resize(region_names.size(), false);

    std::vector<VecX> signals;
    for (std::size_t r = 0; r < region_names.size(); ++r)
    {
        const std::vector<int>& verts = find_region(seq.regions, region_names[r],
                                                    seq.vertex_count(),
                                                    "region correlation");

        // Per-vertex displacement-magnitude series, one row per vertex.
        MatX series(static_cast<Eigen::Index>(verts.size()), frame_count);
        for (int t = 0; t < frame_count; ++t)
            for (std::size_t k = 0; k < verts.size(); ++k)
                series(static_cast<Eigen::Index>(k), t) =
                    (seq.frames[static_cast<std::size_t>(t)].row(verts[k]) -
                     mean_pos.row(verts[k]))
                        .norm();

        VecX signal = series.colwise().mean().transpose();
        if (is_static(signal))
            graph.degenerate[r] = true;
        signals.push_back(std::move(signal));

        // Mean pairwise correlation via standardized series: with each row z_k
        // zero-mean and unit population variance, sum_{k != l} <z_k, z_l> =
        // ||sum_k z_k||^2 - K*T.
        const Eigen::Index region_size = series.rows();
        if (region_size < 2)
        {
            graph.self_corr[r] = 1.0;
            continue;
        }
        Eigen::Index live = 0;
        VecX accum = VecX::Zero(frame_count);
        for (Eigen::Index k = 0; k < region_size; ++k)
        {
            VecX z = series.row(k).transpose();
            if (is_static(z))
                continue; // static vertex, no defined correlation
            z.array() -= z.mean();
            accum += z * (std::sqrt(static_cast<double>(frame_count)) / z.norm());
            ++live;
        }
        if (live < 2)
        {
            graph.self_corr[r] = live == 1 ? 1.0 : 0.0;
            continue;
        }
        const double total = accum.squaredNorm() -
                             static_cast<double>(live) * frame_count;
        graph.self_corr[r] = total / (static_cast<double>(live) *
                                      static_cast<double>(live - 1) * frame_count);
    }

    for (std::size_t a = 0; a < region_names.size(); ++a)
        for (std::size_t b = a + 1; b < region_names.size(); ++b)
        {
            if (graph.degenerate[a] || graph.degenerate[b])
                continue;
            const double w = pearson(signals[a], signals[b]);
            if (w >= threshold)
                graph.edges.push_back({static_cast<int>(a), static_cast<int>(b), w});
        }
    return graph;
}

SequenceMetrics lip_metrics(const VertexSequence& pred, const VertexSequence& gt,
                            const std::map<std::string, std::vector<int>>& regions)
{
    pred.validate();
    gt.validate();
    if (pred.frame_count() != gt.frame_count())
        throw ValidationError("lip metrics: frame count mismatch (" +
                              std::to_string(pred.frame_count()) + " vs " +
                              std::to_string(gt.frame_count()) + ")");
    if (pred.vertex_count() != gt.vertex_count())
        throw ValidationError("lip metrics: vertex count mismatch (" +
                              std::to_string(pred.vertex_count()) + " vs " +
                              std::to_string(gt.vertex_count()) + ")");

    auto frame_max = [&](const std::vector<int>& verts) {
        double sum = 0.0;
        for (int t = 0; t < pred.frame_count(); ++t)
        {
            double worst = 0.0;
            for (const int v : verts)
                worst = std::max(worst, (pred.frames[static_cast<std::size_t>(t)].row(v) -
                                         gt.frames[static_cast<std::size_t>(t)].row(v))
                                            .norm());
            sum += worst;
        }
        return sum / pred.frame_count();
    };

    const std::vector<int>& lip = find_region(regions, "lip", pred.vertex_count(),
                                              "lip metrics");
    const std::vector<int>& upper = find_region(regions, "upper", pred.vertex_count(),
                                                "lip metrics");
    const std::vector<int>& face = find_region(regions, "face", pred.vertex_count(),
                                               "lip metrics");

    SequenceMetrics out;
    out.l_max_lip = frame_max(lip);
    out.l_max_upper = frame_max(upper);
    out.l_max_face = frame_max(face);

    double sum = 0.0;
    for (int t = 0; t < pred.frame_count(); ++t)
        for (const int v : lip)
            sum += (pred.frames[static_cast<std::size_t>(t)].row(v) -
                    gt.frames[static_cast<std::size_t>(t)].row(v))
                       .norm();
    out.l_mean_lip = sum / (static_cast<double>(pred.frame_count()) *
                            static_cast<double>(lip.size()));
    return out;
}

} // namespace facefit
