#pragma once

#include <Eigen/Core>

namespace se3reg {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat36 = Eigen::Matrix<double, 3, 6>;

// 3x3 orthonormal matrix with determinant +1.
struct Rotation {
  Mat3 m = Mat3::Identity();

  Rotation() = default;
  explicit Rotation(const Mat3& mat) : m(mat) {}
};

// Rigid motion (R, t) acting as p -> R p + t. The homogeneous 4x4 form has
// bottom row (0, 0, 0, 1) exactly.
struct RigidMotion {
  Rotation rotation;
  Vec3 translation = Vec3::Zero();

  RigidMotion() = default;
  RigidMotion(const Rotation& r, const Vec3& t) : rotation(r), translation(t) {}

  Mat4 matrix() const;
  static RigidMotion from_matrix(const Mat4& m);
};

// se(3) element split into the axis-angle block omega and the translational
// block u. The group translation couples through t = P(omega) u.
struct Twist {
  Vec3 omega = Vec3::Zero();
  Vec3 u = Vec3::Zero();

  Twist() = default;
  Twist(const Vec3& w, const Vec3& uu) : omega(w), u(uu) {}

  Vec6 vec() const {
    Vec6 v;
    v << omega, u;
    return v;
  }
  static Twist from_vec(const Vec6& v) { return {v.head<3>(), v.tail<3>()}; }

  double norm() const { return vec().norm(); }

  // 4x4 Lie-algebra matrix [[omega]x, u; 0, 0].
  Mat4 hat() const;
};

// Skew-symmetric matrix of omega: hat3(w) * v == w x v.
Mat3 hat3(const Vec3& omega);

// Closed-form exponential, unnormalized-omega convention: with theta = |w|,
// R = I + (sin th / th) [w]x + ((1 - cos th) / th^2) [w]x^2.
Rotation exp_so3(const Vec3& omega);

// Inverse of exp_so3 with |result| in [0, pi]. Angles near pi take a
// dedicated branch that recovers the axis from the symmetric part of R.
Vec3 log_so3(const Rotation& r);

// The coupling matrix P with t = P u:
// P = I + ((1 - cos th)/th^2) [w]x + ((th - sin th)/th^3) [w]x^2.
Mat3 translation_coupling(const Vec3& omega);

// Equals the matrix exponential of v.hat().
RigidMotion exp_se3(const Twist& v);

// Inverse of exp_se3: omega = log_so3(R), u = P(omega)^-1 t.
Twist log_se3(const RigidMotion& m);

RigidMotion compose(const RigidMotion& a, const RigidMotion& b);
RigidMotion inverse(const RigidMotion& m);
Vec3 apply(const RigidMotion& m, const Vec3& p);

// Nearest rotation in Frobenius norm (polar factor via SVD).
Rotation orthonormalized(const Rotation& r);

// Geodesic angle |log(a b^T)| in radians.
double rotation_angle_error(const Rotation& a, const Rotation& b);
double translation_norm_error(const RigidMotion& a, const RigidMotion& b);

inline RigidMotion operator*(const RigidMotion& a, const RigidMotion& b) {
  return compose(a, b);
}

}  // namespace se3reg
