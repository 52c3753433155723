/*
 * facefit - multi-view RGB-D 4D face reconstruction in modern C++.
 *
 * File: include/facefit/error.hpp
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

#include <stdexcept>
#include <string>

namespace facefit {

/**
 * Thrown when an input violates a documented precondition or a container
 * fails its manifest contract. Maps to CLI exit code 3.
 */
class ValidationError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/**
 * Thrown when a well-formed problem turns out to be numerically unsolvable
 * (degenerate configurations, empty residual sets). Maps to CLI exit code 4.
 */
class NumericalError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/** Thrown on missing or malformed files. Maps to CLI exit code 3. */
class IoError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

} // namespace facefit
