/*
 * facefit - multi-view RGB-D 4D face reconstruction in modern C++.
 *
 * File: tests/test_losses.cpp
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
#include "facefit/losses.hpp"

#include "facefit/error.hpp"
#include "facefit/optim.hpp"
#include "facefit/rng.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

using namespace facefit;
using facefit::testing::random_model;

namespace {

MatN3 random_points(Rng& rng, int n, double scale = 1.0)
{
    MatN3 m(n, 3);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < 3; ++c)
            m(r, c) = scale * rng.normal();
    return m;
}

Mat3 random_rotation(Rng& rng)
{
    Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    return q.normalized().toRotationMatrix();
}

/** Central finite differences of a scalar function of an n-by-3 matrix. */
MatN3 fd_gradient(const std::function<double(const MatN3&)>& f, MatN3 x, double h)
{
    MatN3 g(x.rows(), 3);
    for (Eigen::Index r = 0; r < x.rows(); ++r)
    {
        for (int c = 0; c < 3; ++c)
        {
            const double saved = x(r, c);
            x(r, c) = saved + h;
            const double fp = f(x);
            x(r, c) = saved - h;
            const double fm = f(x);
            x(r, c) = saved;
            g(r, c) = (fp - fm) / (2.0 * h);
        }
    }
    return g;
}

double rel_error(const MatN3& a, const MatN3& b)
{
    const double scale =
        std::max({a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(), 1e-12});
    return (a - b).cwiseAbs().maxCoeff() / scale;
}

RenderOutput blank_output(int w, int h)
{
    RenderOutput out;
    out.width = w;
    out.height = h;
    out.color.assign(static_cast<std::size_t>(w) * h * 3, 0.0);
    out.depth.assign(static_cast<std::size_t>(w) * h, kDepthInfinity);
    out.coverage.assign(static_cast<std::size_t>(w) * h, 0);
    out.frags.assign(static_cast<std::size_t>(w) * h, FragInfo{});
    return out;
}

} // namespace

TEST_SUITE("losses")
{
    TEST_CASE("landmark3d: exact match gives zero, one offset pair gives its share")
    {
        Rng rng(41);
        const MatN3 verts = random_points(rng, 30);
        std::vector<int> idx;
        std::vector<LandmarkObservation> obs;
        for (int i = 0; i < 10; ++i)
        {
            idx.push_back(3 * i);
            obs.push_back({verts.row(3 * i).transpose(), true});
        }
        CHECK(loss_landmark3d(verts, idx, obs) == 0.0);

        obs[4].point += Vec3(0.01, 0.0, 0.0);
        CHECK(loss_landmark3d(verts, idx, obs) == doctest::Approx(1e-5).epsilon(1e-12));
    }

    TEST_CASE("landmark3d: invalid observations are excluded from the mean")
    {
        Rng rng(42);
        const MatN3 verts = random_points(rng, 20);
        std::vector<int> idx = {0, 5, 10, 15};
        std::vector<LandmarkObservation> obs(4);
        for (int i = 0; i < 4; ++i)
            obs[i] = {verts.row(idx[i]).transpose() + Vec3(0.1, 0, 0), true};
        const double all_valid = loss_landmark3d(verts, idx, obs);

        obs[1].valid = false;
        obs[1].point = Vec3(1e9, -1e9, 0.0); // garbage must be ignored
        obs[3].valid = false;
        CHECK(loss_landmark3d(verts, idx, obs) == doctest::Approx(all_valid).epsilon(1e-12));

        for (auto& o : obs)
            o.valid = false;
        CHECK_THROWS_AS((void)loss_landmark3d(verts, idx, obs), ValidationError);
        MatN3 d = MatN3::Zero(20, 3);
        CHECK_THROWS_AS(loss_landmark3d_backward(verts, idx, obs, 1.0, d), ValidationError);
    }

    TEST_CASE("landmark3d: rejects out-of-range indices and count mismatch")
    {
        Rng rng(43);
        const MatN3 verts = random_points(rng, 5);
        std::vector<LandmarkObservation> obs(1, {Vec3::Zero(), true});
        CHECK_THROWS_AS((void)loss_landmark3d(verts, {7}, obs), ValidationError);
        CHECK_THROWS_AS((void)loss_landmark3d(verts, {1, 2}, obs), ValidationError);
    }

    TEST_CASE("landmark3d: gradient matches finite differences")
    {
        Rng rng(44);
        const MatN3 verts = random_points(rng, 15);
        std::vector<int> idx = {0, 2, 4, 6, 8, 10};
        std::vector<LandmarkObservation> obs;
        for (int i : idx)
            obs.push_back({verts.row(i).transpose() + 0.2 * Vec3(rng.normal(), rng.normal(), rng.normal()),
                           i % 4 != 2});
        MatN3 d_an = MatN3::Zero(15, 3);
        loss_landmark3d_backward(verts, idx, obs, 1.7, d_an);
        const MatN3 d_fd = fd_gradient(
            [&](const MatN3& v) { return 1.7 * loss_landmark3d(v, idx, obs); }, verts, 1e-6);
        CHECK(rel_error(d_an, d_fd) <= 1e-5);
    }

    TEST_CASE("landmark2d: one pixel of error over a 640x480 image")
    {
        CameraIntrinsics cam{500.0, 500.0, 320.0, 240.0, 640, 480};
        RigidTransform extr; // identity
        MatN3 verts(1, 3);
        verts << 0.1, -0.05, 2.0;
        const Vec2 exact = project(cam, verts.row(0).transpose());
        CHECK(loss_landmark2d(verts, {0}, cam, extr, {exact}) == 0.0);

        const Vec2 off = exact + Vec2(1.0, 0.0);
        // squared diagonal of 640x480 is 800^2
        CHECK(loss_landmark2d(verts, {0}, cam, extr, {off}) ==
              doctest::Approx(1.5625e-6).epsilon(1e-12));
    }

    TEST_CASE("landmark2d: landmark behind the camera raises a numerical error")
    {
        CameraIntrinsics cam{500.0, 500.0, 320.0, 240.0, 640, 480};
        RigidTransform extr;
        MatN3 verts(2, 3);
        verts << 0.0, 0.0, 2.0, 0.0, 0.0, -1.0;
        std::vector<Vec2> obs = {Vec2(320, 240), Vec2(320, 240)};
        CHECK_THROWS_AS((void)loss_landmark2d(verts, {0, 1}, cam, extr, obs), NumericalError);
        MatN3 d = MatN3::Zero(2, 3);
        CHECK_THROWS_AS(loss_landmark2d_backward(verts, {0, 1}, cam, extr, obs, 1.0, d),
                        NumericalError);
    }

    TEST_CASE("landmark2d: gradient matches finite differences through the projection")
    {
        Rng rng(45);
        CameraIntrinsics cam{420.0, 410.0, 330.0, 250.0, 640, 480};
        RigidTransform extr;
        extr.rotation = random_rotation(rng);
        extr.translation = Vec3(0.05, -0.08, 2.5);
        MatN3 verts = random_points(rng, 12, 0.2);
        std::vector<int> idx = {1, 3, 5, 7, 9};
        std::vector<Vec2> obs;
        for (int i : idx)
        {
            const Vec3 p = extr.apply(verts.row(i).transpose());
            obs.push_back(project(cam, p) + Vec2(3.0 * rng.normal(), 3.0 * rng.normal()));
        }
        MatN3 d_an = MatN3::Zero(12, 3);
        loss_landmark2d_backward(verts, idx, cam, extr, obs, 0.9, d_an);
        const MatN3 d_fd = fd_gradient(
            [&](const MatN3& v) { return 0.9 * loss_landmark2d(v, idx, cam, extr, obs); },
            verts, 1e-6);
        CHECK(rel_error(d_an, d_fd) <= 1e-4);
    }

    TEST_CASE("rgb: constant residual and per-pixel oracle")
    {
        Rng rng(46);
        const int w = 8, h = 6;
        RenderOutput out = blank_output(w, h);
        ImageRGB8 obs(w, h);
        // cover a block, leave the rest holding garbage that must be ignored
        for (std::size_t pix = 0; pix < out.pixel_count(); ++pix)
        {
            out.color[3 * pix + 0] = 7.0;
            out.color[3 * pix + 1] = -7.0;
        }
        for (int y = 1; y < 4; ++y)
        {
            for (int x = 2; x < 7; ++x)
            {
                const std::size_t pix = static_cast<std::size_t>(y) * w + x;
                out.coverage[pix] = 1;
                out.color[3 * pix + 0] = 0.3;
                out.color[3 * pix + 1] = 0.0;
                out.color[3 * pix + 2] = 0.0;
            }
        }
        CHECK(loss_rgb(out, obs) == doctest::Approx(0.3).epsilon(1e-12));

        // exact match: rendered equals observed / 255
        for (std::size_t pix = 0; pix < out.pixel_count(); ++pix)
        {
            if (!out.coverage[pix])
                continue;
            for (int c = 0; c < 3; ++c)
            {
                obs.data[3 * pix + c] = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
                out.color[3 * pix + c] = obs.data[3 * pix + c] / 255.0;
            }
        }
        CHECK(loss_rgb(out, obs) == 0.0);

        // random colors against a longhand mean-of-norms oracle
        double expect = 0.0;
        int covered = 0;
        for (std::size_t pix = 0; pix < out.pixel_count(); ++pix)
        {
            if (!out.coverage[pix])
                continue;
            double sq = 0.0;
            for (int c = 0; c < 3; ++c)
            {
                out.color[3 * pix + c] = rng.uniform();
                const double diff = out.color[3 * pix + c] - obs.data[3 * pix + c] / 255.0;
                sq += diff * diff;
            }
            expect += std::sqrt(sq);
            ++covered;
        }
        expect /= covered;
        CHECK(loss_rgb(out, obs) == doctest::Approx(expect).epsilon(1e-10));
    }

    TEST_CASE("rgb: no coverage raises, size mismatch raises")
    {
        RenderOutput out = blank_output(4, 4);
        ImageRGB8 obs(4, 4);
        CHECK_THROWS_AS((void)loss_rgb(out, obs), ValidationError);
        ImageRGB8 wrong(5, 4);
        out.coverage[0] = 1;
        CHECK_THROWS_AS((void)loss_rgb(out, wrong), ValidationError);
    }

    TEST_CASE("rgb: gradient matches finite differences on covered pixels")
    {
        Rng rng(47);
        const int w = 5, h = 4;
        RenderOutput out = blank_output(w, h);
        ImageRGB8 obs(w, h);
        for (std::size_t pix = 0; pix < out.pixel_count(); ++pix)
        {
            if (rng.uniform() < 0.4)
                continue;
            out.coverage[pix] = 1;
            for (int c = 0; c < 3; ++c)
            {
                obs.data[3 * pix + c] = static_cast<std::uint8_t>(rng.uniform_int(0, 200));
                // keep the residual away from zero so the norm stays smooth
                out.color[3 * pix + c] = obs.data[3 * pix + c] / 255.0 + 0.15 + 0.3 * rng.uniform();
            }
        }
        std::vector<double> d_an;
        loss_rgb_backward(out, obs, 1.3, d_an);

        for (std::size_t pix = 0; pix < out.pixel_count(); ++pix)
        {
            for (int c = 0; c < 3; ++c)
            {
                const double saved = out.color[3 * pix + c];
                const double h_fd = 1e-6;
                out.color[3 * pix + c] = saved + h_fd;
                const double fp = out.coverage[pix] ? loss_rgb(out, obs) : 0.0;
                out.color[3 * pix + c] = saved - h_fd;
                const double fm = out.coverage[pix] ? loss_rgb(out, obs) : 0.0;
                out.color[3 * pix + c] = saved;
                const double fd = 1.3 * (fp - fm) / (2.0 * h_fd);
                CHECK(d_an[3 * pix + c] == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
                if (!out.coverage[pix])
                    CHECK(d_an[3 * pix + c] == 0.0);
            }
        }
    }

    TEST_CASE("depth: uniform error, truncation, and validity masking")
    {
        const int w = 5, h = 2;
        RenderOutput out = blank_output(w, h);
        ImageGray16 obs(w, h);
        for (std::size_t pix = 0; pix < out.pixel_count(); ++pix)
        {
            out.coverage[pix] = 1;
            obs.data[pix] = 1000; // 1 m
            out.depth[pix] = 1.010;
        }
        CHECK(loss_depth(out, obs, 0.05) == doctest::Approx(0.010).epsilon(1e-12));

        // nine exact pixels and one 80 mm outlier clamp to trunc / 10
        for (std::size_t pix = 0; pix < out.pixel_count(); ++pix)
            out.depth[pix] = 1.0;
        out.depth[3] = 1.080;
        CHECK(loss_depth(out, obs, 0.05) == doctest::Approx(0.005).epsilon(1e-12));

        // pixels with observed == 0 leave the mean
        obs.data[3] = 0;
        CHECK(loss_depth(out, obs, 0.05) == 0.0);

        for (std::size_t pix = 0; pix < out.pixel_count(); ++pix)
            obs.data[pix] = 0;
        CHECK_THROWS_AS((void)loss_depth(out, obs, 0.05), ValidationError);
    }

    TEST_CASE("depth: gradient is the signed mean share, zero on clamped pixels")
    {
        const int w = 4, h = 1;
        RenderOutput out = blank_output(w, h);
        ImageGray16 obs(w, h);
        for (int pix = 0; pix < 4; ++pix)
        {
            out.coverage[pix] = 1;
            obs.data[pix] = 1000;
        }
        out.depth[0] = 1.020;  // +20 mm
        out.depth[1] = 0.985;  // -15 mm
        out.depth[2] = 1.300;  // clamped at 50 mm
        out.depth[3] = 1.008;  // +8 mm
        std::vector<double> d;
        loss_depth_backward(out, obs, 0.05, 2.0, d);
        CHECK(d[0] == doctest::Approx(2.0 / 4).epsilon(1e-12));
        CHECK(d[1] == doctest::Approx(-2.0 / 4).epsilon(1e-12));
        CHECK(d[2] == 0.0);
        CHECK(d[3] == doctest::Approx(2.0 / 4).epsilon(1e-12));

        for (int pix = 0; pix < 4; ++pix)
        {
            if (pix == 2)
                continue;
            const double saved = out.depth[pix];
            const double h_fd = 1e-6;
            out.depth[pix] = saved + h_fd;
            const double fp = loss_depth(out, obs, 0.05);
            out.depth[pix] = saved - h_fd;
            const double fm = loss_depth(out, obs, 0.05);
            out.depth[pix] = saved;
            CHECK(d[pix] == doctest::Approx(2.0 * (fp - fm) / (2.0 * h_fd)).epsilon(1e-6));
        }
    }

    TEST_CASE("prior: squared norms of alpha, beta, delta; gamma excluded")
    {
        FaceParams params;
        params.alpha = VecX::Zero(2);
        params.beta = VecX::Zero(3);
        params.delta = VecX::Zero(2);
        CHECK(loss_prior(params) == 0.0);

        params.alpha << 1.0, 1.0;
        CHECK(loss_prior(params) == doctest::Approx(2.0).epsilon(1e-15));

        params.gamma[0] = VecX::Constant(27, 1e6);
        params.gamma[2] = VecX::Constant(27, -1e6);
        CHECK(loss_prior(params) == doctest::Approx(2.0).epsilon(1e-15));

        Rng rng(48);
        params.alpha = VecX::NullaryExpr(8, [&](Eigen::Index) { return rng.normal(); });
        params.beta = VecX::NullaryExpr(6, [&](Eigen::Index) { return rng.normal(); });
        params.delta = VecX::NullaryExpr(5, [&](Eigen::Index) { return rng.normal(); });
        double expect = 0.0;
        for (Eigen::Index i = 0; i < params.alpha.size(); ++i)
            expect += params.alpha[i] * params.alpha[i];
        for (Eigen::Index i = 0; i < params.beta.size(); ++i)
            expect += params.beta[i] * params.beta[i];
        for (Eigen::Index i = 0; i < params.delta.size(); ++i)
            expect += params.delta[i] * params.delta[i];
        CHECK(loss_prior(params) == doctest::Approx(expect).epsilon(1e-12));

        VecX da = VecX::Zero(8), db = VecX::Zero(6), dd = VecX::Zero(5);
        loss_prior_backward(params, 0.5, da, db, dd);
        CHECK((da - params.alpha).cwiseAbs().maxCoeff() <= 1e-15);
        CHECK((db - params.beta).cwiseAbs().maxCoeff() <= 1e-15);
        CHECK((dd - params.delta).cwiseAbs().maxCoeff() <= 1e-15);
    }

    TEST_CASE("edge: rigid motions of the reference cost nothing")
    {
        Rng rng(49);
        const MorphableModel model = random_model(60, 4, 77);
        const MeshTopology topo = MeshTopology::build(*model.triangles, 60);
        const MatN3 ref = model.mean_shape;

        const Mat3 r = random_rotation(rng);
        const Vec3 t(0.3, -1.2, 0.7);
        MatN3 moved = (ref * r.transpose()).rowwise() + t.transpose();
        CHECK(loss_edge(moved, ref, topo) <= 1e-12);

        // invariance of a genuine deformation under a shared rigid motion
        MatN3 deformed = ref + 0.05 * random_points(rng, 60);
        const double before = loss_edge(deformed, ref, topo);
        CHECK(before > 1e-6);
        MatN3 deformed_moved = (deformed * r.transpose()).rowwise() + t.transpose();
        CHECK(loss_edge(deformed_moved, moved, topo) ==
              doctest::Approx(before).epsilon(1e-10));
    }

    TEST_CASE("edge: a unit edge stretched to two costs one")
    {
        MeshTopology topo;
        topo.edges = {{0, 1}};
        topo.neighbors = {{1}, {0}};
        MatN3 ref(2, 3), def(2, 3);
        ref << 0, 0, 0, 1, 0, 0;
        def << 0, 0, 0, 2, 0, 0;
        CHECK(loss_edge(def, ref, topo) == doctest::Approx(1.0).epsilon(1e-15));
    }

    TEST_CASE("edge: gradient matches finite differences")
    {
        Rng rng(50);
        const MorphableModel model = random_model(25, 4, 78);
        const MeshTopology topo = MeshTopology::build(*model.triangles, 25);
        const MatN3 ref = model.mean_shape;
        const MatN3 deformed = ref + 0.08 * random_points(rng, 25);
        MatN3 d_an = MatN3::Zero(25, 3);
        loss_edge_backward(deformed, ref, topo, 1.1, d_an);
        const MatN3 d_fd = fd_gradient(
            [&](const MatN3& v) { return 1.1 * loss_edge(v, ref, topo); }, deformed, 1e-6);
        CHECK(rel_error(d_an, d_fd) <= 1e-5);
    }

    TEST_CASE("laplacian: translation invariant and zero on constant fields")
    {
        Rng rng(51);
        const MorphableModel model = random_model(20, 4, 79);
        const MeshTopology topo = MeshTopology::build(*model.triangles, 20);

        CHECK(loss_laplacian(MatN3::Zero(20, 3), topo) == 0.0);

        MatN3 constant = MatN3::Zero(20, 3);
        constant.rowwise() += Vec3(0.4, -0.2, 0.9).transpose();
        CHECK(loss_laplacian(constant, topo) <= 1e-12);

        const MatN3 field = random_points(rng, 20, 0.3);
        MatN3 shifted = field;
        shifted.rowwise() += Vec3(10.0, -3.0, 5.0).transpose();
        CHECK(loss_laplacian(shifted, topo) ==
              doctest::Approx(loss_laplacian(field, topo)).epsilon(1e-12));
    }

    TEST_CASE("laplacian: matches an explicit graph-Laplacian matrix")
    {
        Rng rng(52);
        const MorphableModel model = random_model(20, 4, 80);
        const MeshTopology topo = MeshTopology::build(*model.triangles, 20);
        const MatN3 field = random_points(rng, 20, 0.5);

        MatX lap = MatX::Zero(20, 20);
        for (int v = 0; v < 20; ++v)
        {
            const auto& ring = topo.neighbors[v];
            if (ring.empty())
                continue;
            lap(v, v) = 1.0;
            for (int u : ring)
                lap(v, u) -= 1.0 / static_cast<double>(ring.size());
        }
        const double expect = (lap * field).squaredNorm() / 20.0;
        CHECK(loss_laplacian(field, topo) == doctest::Approx(expect).epsilon(1e-10));
    }

    TEST_CASE("laplacian: gradient matches finite differences")
    {
        Rng rng(53);
        const MorphableModel model = random_model(20, 4, 81);
        const MeshTopology topo = MeshTopology::build(*model.triangles, 20);
        const MatN3 field = random_points(rng, 20, 0.5);
        MatN3 d_an = MatN3::Zero(20, 3);
        loss_laplacian_backward(field, topo, 0.7, d_an);
        const MatN3 d_fd = fd_gradient(
            [&](const MatN3& v) { return 0.7 * loss_laplacian(v, topo); }, field, 1e-6);
        CHECK(rel_error(d_an, d_fd) <= 1e-6);
    }

    TEST_CASE("offset: mean squared magnitude with quadratic scaling")
    {
        MatN3 offsets = MatN3::Zero(10, 3);
        CHECK(loss_offset(offsets) == 0.0);

        offsets(4, 0) = 0.1;
        CHECK(loss_offset(offsets) == doctest::Approx(1e-3).epsilon(1e-12));

        Rng rng(54);
        const MatN3 field = random_points(rng, 10, 0.2);
        CHECK(loss_offset(2.0 * field) ==
              doctest::Approx(4.0 * loss_offset(field)).epsilon(1e-12));

        MatN3 d_an = MatN3::Zero(10, 3);
        loss_offset_backward(field, 1.0, d_an);
        CHECK((d_an - field * 0.2).cwiseAbs().maxCoeff() <= 1e-15);
        const MatN3 d_fd =
            fd_gradient([&](const MatN3& v) { return loss_offset(v); }, field, 1e-6);
        CHECK(rel_error(d_an, d_fd) <= 1e-6);
    }
}

TEST_SUITE("optim")
{
    TEST_CASE("adam: zero gradient from a fresh state changes nothing")
    {
        AdamConfig cfg;
        VecX x(3);
        x << 1.0, -2.0, 0.5;
        const VecX before = x;
        AdamMoments mom = AdamMoments::zeros(3);
        adam_step(x, VecX::Zero(3), mom, 1, cfg);
        CHECK(x == before);
        CHECK(mom.m.cwiseAbs().maxCoeff() == 0.0);
        CHECK(mom.v.cwiseAbs().maxCoeff() == 0.0);
    }

    TEST_CASE("adam: zero gradient decays existing moments by beta factors")
    {
        AdamConfig cfg;
        VecX x = VecX::Zero(2);
        AdamMoments mom = AdamMoments::zeros(2);
        mom.m << 0.5, -0.25;
        mom.v << 0.1, 0.2;
        const VecX m_before = mom.m;
        const VecX v_before = mom.v;
        adam_step(x, VecX::Zero(2), mom, 5, cfg);
        CHECK((mom.m - cfg.beta1 * m_before).cwiseAbs().maxCoeff() <= 1e-15);
        CHECK((mom.v - cfg.beta2 * v_before).cwiseAbs().maxCoeff() <= 1e-15);
    }

    TEST_CASE("adam: first step moves by minus lr times the gradient sign")
    {
        AdamConfig cfg;
        cfg.lr = 0.01;
        VecX x(4);
        x << 0.0, 1.0, -3.0, 2.0;
        VecX g(4);
        g << 2.5, -0.7, 0.003, 40.0;
        const VecX before = x;
        AdamMoments mom = AdamMoments::zeros(4);
        adam_step(x, g, mom, 1, cfg);
        for (int i = 0; i < 4; ++i)
        {
            const double expect = before[i] - cfg.lr * (g[i] > 0 ? 1.0 : -1.0);
            CHECK(std::abs(x[i] - expect) <= 1e-6);
        }
    }

    TEST_CASE("adam: matches a longhand per-element reference over many steps")
    {
        AdamConfig cfg;
        cfg.lr = 0.02;
        Rng rng(55);
        VecX x(3);
        x << 0.3, -0.8, 1.4;
        VecX x_ref = x;
        AdamMoments mom = AdamMoments::zeros(3);
        double m_ref[3] = {0, 0, 0};
        double v_ref[3] = {0, 0, 0};
        for (int t = 1; t <= 25; ++t)
        {
            VecX g(3);
            for (int i = 0; i < 3; ++i)
                g[i] = rng.normal();
            adam_step(x, g, mom, t, cfg);
            for (int i = 0; i < 3; ++i)
            {
                m_ref[i] = 0.9 * m_ref[i] + 0.1 * g[i];
                v_ref[i] = 0.999 * v_ref[i] + 0.001 * g[i] * g[i];
                const double m_hat = m_ref[i] / (1.0 - std::pow(0.9, t));
                const double v_hat = v_ref[i] / (1.0 - std::pow(0.999, t));
                x_ref[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
            }
        }
        CHECK((x - x_ref).cwiseAbs().maxCoeff() <= 1e-14);
    }

    TEST_CASE("adam: two hundred steps shrink a quadratic bowl from one below 0.1")
    {
        AdamConfig cfg;
        cfg.lr = 0.01;
        VecX x(1);
        x << 1.0;
        AdamMoments mom = AdamMoments::zeros(1);
        for (int t = 1; t <= 200; ++t)
        {
            VecX g(1);
            g << 2.0 * x[0];
            adam_step(x, g, mom, t, cfg);
        }
        CHECK(std::abs(x[0]) < 0.1);
    }

    TEST_CASE("adam: rejects mismatched sizes and non-positive step index")
    {
        AdamConfig cfg;
        VecX x = VecX::Zero(3);
        AdamMoments mom = AdamMoments::zeros(3);
        CHECK_THROWS_AS(adam_step(x, VecX::Zero(2), mom, 1, cfg), ValidationError);
        AdamMoments wrong = AdamMoments::zeros(2);
        CHECK_THROWS_AS(adam_step(x, VecX::Zero(3), wrong, 1, cfg), ValidationError);
        CHECK_THROWS_AS(adam_step(x, VecX::Zero(3), mom, 0, cfg), ValidationError);
    }

    TEST_CASE("adam: accumulate updates moments exactly as a step would, sans move")
    {
        AdamConfig cfg;
        Rng rng(56);
        VecX x(4);
        x << 0.2, -0.4, 1.1, -2.3;
        AdamMoments stepped = AdamMoments::zeros(4);
        AdamMoments folded = AdamMoments::zeros(4);
        for (int t = 1; t <= 10; ++t)
        {
            VecX g(4);
            for (int i = 0; i < 4; ++i)
                g[i] = rng.normal();
            VecX x_step = x;
            adam_step(x_step, g, stepped, t, cfg);
            adam_accumulate(g, folded, cfg);
        }
        CHECK((stepped.m - folded.m).cwiseAbs().maxCoeff() == 0.0);
        CHECK((stepped.v - folded.v).cwiseAbs().maxCoeff() == 0.0);

        CHECK_THROWS_AS(adam_accumulate(VecX::Zero(3), folded, cfg), ValidationError);
    }
}
