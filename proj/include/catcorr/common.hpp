#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <stdexcept>
#include <string>
#include <vector>

namespace catcorr {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

/// Base error for every failed precondition in the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file or schema violation (CLI exit code 2).
class InputError : public Error {
public:
    using Error::Error;
};

/// Stored state does not match what the caller expects (CLI exit code 3).
class StateMismatch : public Error {
public:
    using Error::Error;
};

} // namespace catcorr
