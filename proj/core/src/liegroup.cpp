#include "se3reg/liegroup.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

namespace se3reg {

namespace {

// sin(th)/th, accurate through th = 0.
double sinc(double theta) {
  if (theta < 1e-6) {
    const double t2 = theta * theta;
    return 1.0 - t2 / 6.0 + t2 * t2 / 120.0;
  }
  return std::sin(theta) / theta;
}

// (1 - cos th)/th^2 via the half-angle identity, which has no cancellation.
double cos_coeff(double theta) {
  if (theta < 1e-6) {
    const double t2 = theta * theta;
    return 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
  }
  const double s = std::sin(0.5 * theta) / (0.5 * theta);
  return 0.5 * s * s;
}

// (th - sin th)/th^3. The direct form cancels badly below ~1e-2, where the
// Taylor series is already exact to double precision.
double sin_coeff(double theta) {
  if (theta < 1e-2) {
    const double t2 = theta * theta;
    return 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0;
  }
  return (theta - std::sin(theta)) / (theta * theta * theta);
}

}  // namespace

Mat4 RigidMotion::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation.m;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

RigidMotion RigidMotion::from_matrix(const Mat4& m) {
  return {Rotation(m.topLeftCorner<3, 3>()), m.topRightCorner<3, 1>()};
}

Mat4 Twist::hat() const {
  Mat4 m = Mat4::Zero();
  m.topLeftCorner<3, 3>() = hat3(omega);
  m.topRightCorner<3, 1>() = u;
  return m;
}

Mat3 hat3(const Vec3& w) {
  Mat3 m;
  m << 0.0, -w.z(), w.y(),  //
      w.z(), 0.0, -w.x(),   //
      -w.y(), w.x(), 0.0;
  return m;
}

Rotation exp_so3(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 k = hat3(omega);
  return Rotation(Mat3::Identity() + sinc(theta) * k +
                  cos_coeff(theta) * k * k);
}

Vec3 log_so3(const Rotation& r) {
  const Mat3& m = r.m;
  const double trace = m.trace();
  // r_vee = vee(R - R^T)/2 = sin(theta) * axis.
  const Vec3 r_vee{0.5 * (m(2, 1) - m(1, 2)), 0.5 * (m(0, 2) - m(2, 0)),
                   0.5 * (m(1, 0) - m(0, 1))};

  if (trace <= -1.0 + 1e-6) {
    // Angle near pi: the skew part vanishes, so take the axis from the
    // symmetric part. aa^T = (sym(R) - cos(th) I) / (1 - cos(th)).
    const double s = std::min(r_vee.norm(), 1.0);
    const double theta = std::numbers::pi - std::asin(s);
    const double c = std::max(-1.0, 0.5 * (trace - 1.0));
    const Mat3 sym = 0.5 * (m + m.transpose());
    const Mat3 outer = (sym - c * Mat3::Identity()) / (1.0 - c);
    int k = 0;
    outer.diagonal().maxCoeff(&k);
    Vec3 axis;
    axis[k] = std::sqrt(std::max(outer(k, k), 0.0));
    for (int i = 0; i < 3; ++i) {
      if (i != k) axis[i] = outer(i, k) / axis[k];
    }
    axis.normalize();
    // Off-diagonal ratios fix the axis only up to overall sign; the sign of
    // the (vanishing) skew part settles it away from exactly pi.
    if (axis.dot(r_vee) < 0.0) axis = -axis;
    return theta * axis;
  }

  const double s = std::min(r_vee.norm(), 1.0);
  const double c = 0.5 * (trace - 1.0);
  const double theta = std::atan2(s, c);
  if (s < 1e-9) {
    // theta/sin(theta) -> 1; r_vee already equals omega to high order.
    return (1.0 + s * s / 6.0) * r_vee;
  }
  return (theta / s) * r_vee;
}

Mat3 translation_coupling(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 k = hat3(omega);
  return Mat3::Identity() + cos_coeff(theta) * k + sin_coeff(theta) * k * k;
}

RigidMotion exp_se3(const Twist& v) {
  return {exp_so3(v.omega), translation_coupling(v.omega) * v.u};
}

Twist log_se3(const RigidMotion& m) {
  const Vec3 omega = log_so3(m.rotation);
  const Mat3 p = translation_coupling(omega);
  // P is invertible for |omega| <= pi (first singularity at 2*pi).
  const Vec3 u = p.partialPivLu().solve(m.translation);
  return {omega, u};
}

RigidMotion compose(const RigidMotion& a, const RigidMotion& b) {
  return {Rotation(a.rotation.m * b.rotation.m),
          a.rotation.m * b.translation + a.translation};
}

RigidMotion inverse(const RigidMotion& m) {
  const Mat3 rt = m.rotation.m.transpose();
  return {Rotation(rt), -(rt * m.translation)};
}

Vec3 apply(const RigidMotion& m, const Vec3& p) {
  return m.rotation.m * p + m.translation;
}

Rotation orthonormalized(const Rotation& r) {
  Eigen::JacobiSVD<Mat3> svd(r.m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0
                ? -1.0
                : 1.0;
  return Rotation(svd.matrixU() * d * svd.matrixV().transpose());
}

double rotation_angle_error(const Rotation& a, const Rotation& b) {
  return log_so3(Rotation(a.m * b.m.transpose())).norm();
}

double translation_norm_error(const RigidMotion& a, const RigidMotion& b) {
  return (a.translation - b.translation).norm();
}

}  // namespace se3reg
