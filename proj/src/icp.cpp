/*
 * facefit - multi-view RGB-D 4D face reconstruction in modern C++.
 *
 * File: src/icp.cpp
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
#include "facefit/camera.hpp"
#include "facefit/error.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

namespace facefit {

namespace {

// Uniform-grid spatial hash over the target cloud. Queries expand cell
// rings outward until the best candidate provably cannot be beaten, capped
// by the correspondence radius.
class GridIndex
{
  public:
    GridIndex(const MatN3& points, double max_radius) : points_(points)
    {
        Vec3 lo = points.colwise().minCoeff();
        Vec3 hi = points.colwise().maxCoeff();
        const double diag = (hi - lo).norm();
        // Bounded below by a fraction of the search radius so an unmatched
        // query scans a bounded number of rings.
        cell_ = std::max({diag / 64.0, max_radius / 16.0, 1e-9});
        origin_ = lo;
        max_ring_ = static_cast<int>(std::ceil(max_radius / cell_)) + 1;
        for (int i = 0; i < points.rows(); ++i)
            cells_[key_of(points.row(i))].push_back(i);
    }

    // Returns the index of the nearest target point within max_radius, or -1.
    int nearest(const Vec3& query, double max_radius) const
    {
        const auto [cx, cy, cz] = coords_of(query);
        int best = -1;
        double best_d2 = max_radius * max_radius;
        for (int ring = 0; ring <= max_ring_; ++ring)
        {
            // Once a candidate is closer than the nearest possible point in
            // this ring, no farther ring can improve on it.
            if (best >= 0)
            {
                const double ring_min = (ring - 1) * cell_;
                if (ring_min > 0.0 && ring_min * ring_min > best_d2)
                    break;
            }
            bool any_cell = false;
            for (int dx = -ring; dx <= ring; ++dx)
                for (int dy = -ring; dy <= ring; ++dy)
                    for (int dz = -ring; dz <= ring; ++dz)
                    {
                        if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring)
                            continue; // shell only
                        const auto it = cells_.find(pack(cx + dx, cy + dy, cz + dz));
                        if (it == cells_.end())
                            continue;
                        any_cell = true;
                        for (const int i : it->second)
                        {
                            const double d2 = (Vec3(points_.row(i)) - query).squaredNorm();
                            if (d2 < best_d2)
                            {
                                best_d2 = d2;
                                best = i;
                            }
                        }
                    }
            (void)any_cell;
        }
        return best;
    }

  private:
    std::tuple<std::int64_t, std::int64_t, std::int64_t> coords_of(const Vec3& p) const
    {
        return {static_cast<std::int64_t>(std::floor((p.x() - origin_.x()) / cell_)),
                static_cast<std::int64_t>(std::floor((p.y() - origin_.y()) / cell_)),
                static_cast<std::int64_t>(std::floor((p.z() - origin_.z()) / cell_))};
    }

    static std::uint64_t pack(std::int64_t x, std::int64_t y, std::int64_t z)
    {
        // 21 bits per axis, offset to keep coordinates positive.
        const std::uint64_t bias = 1u << 20;
        return ((static_cast<std::uint64_t>(x + bias) & 0x1fffff) << 42) |
               ((static_cast<std::uint64_t>(y + bias) & 0x1fffff) << 21) |
               (static_cast<std::uint64_t>(z + bias) & 0x1fffff);
    }

    std::uint64_t key_of(const Vec3& p) const
    {
        const auto [x, y, z] = coords_of(p);
        return pack(x, y, z);
    }

    const MatN3& points_;
    Vec3 origin_ = Vec3::Zero();
    double cell_ = 1.0;
    int max_ring_ = 1;
    std::unordered_map<std::uint64_t, std::vector<int>> cells_;
};

Mat3 skew(const Vec3& w)
{
    Mat3 s;
    s << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
    return s;
}

Mat3 rodrigues(const Vec3& omega)
{
    const double theta = omega.norm();
    if (theta < 1e-12)
        return Mat3::Identity() + skew(omega);
    const Vec3 axis = omega / theta;
    return Eigen::AngleAxisd(theta, axis).toRotationMatrix();
}

Mat3 orthonormalized(const Mat3& r)
{
    const Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 d = Mat3::Identity();
    if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0)
        d(2, 2) = -1.0;
    return svd.matrixU() * d * svd.matrixV().transpose();
}

struct Pair
{
    Vec3 p; ///< transformed source point
    Vec3 q; ///< matched target point
    Vec3 n; ///< target normal
    double dist = 0.0;
};

} // namespace

IcpResult icp_point_to_plane(const PointCloud& source, const PointCloud& target,
                             const RigidTransform& init, int max_iters, double tol,
                             double max_corr_dist)
{
    if (source.size() == 0 || target.size() == 0)
        throw ValidationError("icp: empty point cloud");
    if (source.normals.rows() != source.points.rows() ||
        target.normals.rows() != target.points.rows())
        throw ValidationError("icp: normals missing");

    const GridIndex index(target.points, max_corr_dist);

    IcpResult result;
    result.transform = init;
    RigidTransform previous = init;
    double prev_residual = std::numeric_limits<double>::infinity();

    for (int iter = 0; iter < max_iters; ++iter)
    {
        // --- correspondences under the current transform ---------------------
        std::vector<Pair> pairs;
        pairs.reserve(static_cast<std::size_t>(source.size()));
        for (int i = 0; i < source.size(); ++i)
        {
            const Vec3 p = result.transform.apply(source.points.row(i));
            const int j = index.nearest(p, max_corr_dist);
            if (j < 0)
                continue;
            Pair pair;
            pair.p = p;
            pair.q = target.points.row(j);
            pair.n = target.normals.row(j);
            pair.dist = (pair.p - pair.q).norm();
            pairs.push_back(pair);
        }
        if (pairs.empty())
            throw NumericalError("icp: no correspondences after rejection");

        std::vector<double> dists;
        dists.reserve(pairs.size());
        for (const auto& pair : pairs)
            dists.push_back(pair.dist);
        std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
        const double median = dists[dists.size() / 2];
        const double cutoff = std::max(3.0 * median, 1e-12);
        std::erase_if(pairs, [&](const Pair& pair) { return pair.dist > cutoff; });
        if (pairs.empty())
            throw NumericalError("icp: no correspondences after rejection");

        double residual = 0.0;
        for (const auto& pair : pairs)
            residual += std::abs((pair.p - pair.q).dot(pair.n));
        residual /= static_cast<double>(pairs.size());

        if (residual > prev_residual + 1e-12)
        {
            // The last step hurt: revert it and stop.
            result.transform = previous;
            result.residual = prev_residual;
            break;
        }
        previous = result.transform;
        prev_residual = residual;
        result.residual = residual;
        result.residual_history.push_back(residual);
        result.iterations = iter + 1;

        // --- linearized point-to-plane solve ---------------------------------
        Eigen::Matrix<double, 6, 6> ata = Eigen::Matrix<double, 6, 6>::Zero();
        Eigen::Matrix<double, 6, 1> atb = Eigen::Matrix<double, 6, 1>::Zero();
        for (const auto& pair : pairs)
        {
            Eigen::Matrix<double, 6, 1> row;
            row.head<3>() = pair.p.cross(pair.n);
            row.tail<3>() = pair.n;
            const double r = (pair.p - pair.q).dot(pair.n);
            ata += row * row.transpose();
            atb -= row * r;
        }
        const Eigen::Matrix<double, 6, 1> x = ata.ldlt().solve(atb);
        if (!x.allFinite())
            throw NumericalError("icp: singular normal equations");

        const Vec3 omega = x.head<3>();
        const Vec3 v = x.tail<3>();
        const Mat3 dr = rodrigues(omega);
        RigidTransform updated;
        updated.rotation = orthonormalized(dr * result.transform.rotation);
        updated.translation = dr * result.transform.translation + v;
        result.transform = updated;

        if (x.norm() < tol)
            break;
    }
    return result;
}

} // namespace facefit
