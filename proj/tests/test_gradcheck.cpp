/*
 * facefit - multi-view RGB-D 4D face reconstruction in modern C++.
 *
 * File: tests/test_gradcheck.cpp
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
#include "facefit/gradcheck.hpp"

#include <doctest.h>

#include <algorithm>
#include <set>
#include <string>

using namespace facefit;

TEST_SUITE("gradcheck")
{
    TEST_CASE("every analytic gradient matches finite differences")
    {
        const GradCheckReport report = check_gradients(1);
        CHECK(report.seed == 1);
        CHECK(!report.entries.empty());
        for (const GradCheckEntry& entry : report.entries)
        {
            CAPTURE(entry.term);
            CAPTURE(entry.block);
            CAPTURE(entry.rel_error);
            CHECK(entry.passed);
            CHECK(entry.rel_error <= entry.tolerance);
            CHECK(entry.tolerance == 1e-4);
        }
        CHECK(report.all_passed());
        CHECK(report.worst_rel_error() <= 1e-4);
    }

    TEST_CASE("report covers every loss term and stage")
    {
        const GradCheckReport report = check_gradients(2);
        std::set<std::string> terms;
        for (const GradCheckEntry& entry : report.entries)
            terms.insert(entry.term);
        for (const char* required :
             {"rgb", "depth", "lm2d", "lm3d", "prior", "edge", "laplacian", "offset",
              "sparsity", "anim_total", "anim_total_sq", "stage landmark", "stage dmm",
              "stage vertex"})
        {
            CAPTURE(required);
            CHECK(terms.count(required) == 1);
        }
        // Shared blocks appear under every stage; gamma stays per camera.
        int gamma_blocks = 0;
        for (const GradCheckEntry& entry : report.entries)
            if (entry.block.rfind("gamma:", 0) == 0)
                ++gamma_blocks;
        CHECK(gamma_blocks == 6); // 3 cameras x 2 rendering stages
        CHECK(report.all_passed());
    }

    TEST_CASE("suite runs distinct seeds and reproduces bit-identically")
    {
        const std::vector<GradCheckReport> reports = check_gradient_suite(5, 3);
        REQUIRE(reports.size() == 3);
        for (std::size_t k = 0; k < reports.size(); ++k)
        {
            CHECK(reports[k].seed == 5 + k);
            CHECK(reports[k].all_passed());
        }

        const GradCheckReport again = check_gradients(5);
        REQUIRE(again.entries.size() == reports[0].entries.size());
        for (std::size_t i = 0; i < again.entries.size(); ++i)
        {
            CHECK(again.entries[i].term == reports[0].entries[i].term);
            CHECK(again.entries[i].block == reports[0].entries[i].block);
            CHECK(again.entries[i].rel_error == reports[0].entries[i].rel_error);
        }

        CHECK_THROWS_AS(check_gradient_suite(1, 0), ValidationError);
    }
}
