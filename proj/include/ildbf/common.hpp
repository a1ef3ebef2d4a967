// common.hpp
// Shared numeric types and the error hierarchy used across ildbf.

#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace ildbf {

using cplx = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;
using RMatrix = Eigen::MatrixXd;

inline constexpr double kPi = std::numbers::pi;

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid geometry (source inside the head, bad microphone layout).
class GeometryError : public Error {
public:
    using Error::Error;
};

// Series non-convergence, overflow, singular systems.
class NumericError : public Error {
public:
    using Error::Error;
};

// Malformed or inconsistent user input (shapes, lengths, configs).
class InputError : public Error {
public:
    using Error::Error;
};

// Argument outside a function's mathematical domain.
class DomainError : public Error {
public:
    using Error::Error;
};

// Query outside a tabulated range.
class RangeError : public Error {
public:
    using Error::Error;
};

// Linear constraint set is rank deficient.
class ConstraintError : public Error {
public:
    using Error::Error;
};

// File system or file format problems.
class IoError : public Error {
public:
    using Error::Error;
};

inline double db10(double power_ratio) { return 10.0 * std::log10(power_ratio); }
inline double from_db10(double db) { return std::pow(10.0, db / 10.0); }

// Wraps an angle in radians to (-pi, pi].
inline double wrap_pi(double phase) {
    double w = std::remainder(phase, 2.0 * kPi);
    if (w <= -kPi) w += 2.0 * kPi;
    return w;
}

// Great-circle separation of two horizontal-plane azimuths, in [0, 180] degrees.
inline double azimuth_separation_deg(double az1, double az2) {
    double d = std::fmod(std::abs(az1 - az2), 360.0);
    return d > 180.0 ? 360.0 - d : d;
}

}  // namespace ildbf
