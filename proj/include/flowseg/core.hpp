#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace flowseg {

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;

using Vec3 = Vector3<double>;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A query or seed lies outside the domain of a field or index.
class DomainError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

/// An operation that needs at least one element received none.
class EmptyError : public Error {
 public:
  using Error::Error;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

class InvalidGridError : public Error {
 public:
  using Error::Error;
};

/// Two record sets that must describe the same grid points do not.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

/// Statistics requested on an input with zero variance.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Angle between two vectors in [0, pi], accurate near 0 and pi; zero when
/// either vector is zero.
template <typename Scalar>
Scalar angle_between(const Vector3<Scalar>& u, const Vector3<Scalar>& v) {
  if (!(u.squaredNorm() > Scalar(0)) || !(v.squaredNorm() > Scalar(0))) return Scalar(0);
  return std::atan2(u.cross(v).norm(), u.dot(v));
}

}  // namespace flowseg
