/*
 * facefit - multi-view RGB-D 4D face reconstruction in modern C++.
 *
 * File: include/facefit/metrics.hpp
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
#include <string>
#include <vector>

namespace facefit {

/** A vertex animation: per-frame positions plus named vertex-index regions. */
struct VertexSequence
{
    std::vector<MatN3> frames;
    double fps = 30.0;
    std::map<std::string, std::vector<int>> regions;

    int frame_count() const { return static_cast<int>(frames.size()); }
    int vertex_count() const { return frames.empty() ? 0 : static_cast<int>(frames[0].rows()); }

    /** At least one frame, constant vertex count, region indices in range. */
    void validate() const;
};

enum class Axis
{
    X,
    Y,
    Z,
    All
};

Axis axis_from_string(const std::string& name);
std::string to_string(Axis axis);

/**
 * Mean absolute per-frame displacement of the region's vertices along one
 * axis, in model units per frame; Axis::All averages the three per-axis
 * values. Needs at least two frames.
 */
double vertex_velocity(const VertexSequence& seq, const std::string& region, Axis axis);

/**
 * Region-to-region motion coupling. Each region's signal is the mean
 * displacement magnitude of its vertices from their sequence-mean positions;
 * edges carry the Pearson correlation of two signals and survive only at or
 * above the threshold. `self_corr` is the mean pairwise correlation between
 * the per-vertex displacement series inside one region. A region whose
 * signal has zero variance (up to rounding residue of the mean subtraction)
 * is flagged degenerate and joins no edges.
 */
struct CorrelationGraph
{
    struct Edge
    {
        int a = 0;
        int b = 0;     // region indices, a < b
        double weight = 0.0;
    };

    std::vector<std::string> regions;
    std::vector<double> self_corr;
    std::vector<bool> degenerate;
    std::vector<Edge> edges;
};

CorrelationGraph region_correlation(const VertexSequence& seq,
                                    const std::vector<std::string>& regions,
                                    double threshold = 0.5);

/**
 * Region-wise error between a predicted and a reference sequence. The max
 * variants average each frame's worst vertex error over the named region;
 * the mean variant averages over frames and vertices alike.
 */
struct SequenceMetrics
{
    double l_max_lip = 0.0;
    double l_mean_lip = 0.0;
    double l_max_upper = 0.0;
    double l_max_face = 0.0;
};

SequenceMetrics lip_metrics(const VertexSequence& pred, const VertexSequence& gt,
                            const std::map<std::string, std::vector<int>>& regions);

} // namespace facefit
