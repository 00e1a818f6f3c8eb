// Copyright 2026 The dift Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>

namespace dift {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Rng = std::mt19937_64;

inline constexpr double kPi = 3.14159265358979323846;

/// Error categories; the CLI maps each to a distinct exit code.
enum class ErrorCategory { Input, Config, Data, Io, Internal };

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string &what)
        : std::runtime_error(what), category_(category) {}
    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

/// Rejected input: precondition violated by the caller.
struct InputError : Error {
    explicit InputError(const std::string &what) : Error(ErrorCategory::Input, what) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string &what) : Error(ErrorCategory::Config, what) {}
};

/// Corrupt files, sparse or degenerate data.
struct DataError : Error {
    explicit DataError(const std::string &what) : Error(ErrorCategory::Data, what) {}
};

struct IoError : Error {
    explicit IoError(const std::string &what) : Error(ErrorCategory::Io, what) {}
};

int exit_code(ErrorCategory category);

// Worker cap shared by every parallel loop in the library. 0 means
// hardware concurrency.
void set_max_threads(unsigned n);
unsigned max_threads();

/// Runs body(i) for i in [0, count). Iterations must write disjoint outputs;
/// results are then independent of the worker count.
void parallel_for(std::size_t count, const std::function<void(std::size_t)> &body);

double uniform01(Rng &rng);

} // namespace dift
