#include "se3reg/pairwise.hpp"

#include <Eigen/Dense>
#include <chrono>
#include <cmath>

#include "se3reg/errors.hpp"

namespace se3reg {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void check_finite(const CorrespondenceSet& corrs) {
  for (const auto& c : corrs.pairs) {
    if (!c.p.allFinite() || !c.q.allFinite()) {
      throw Error("correspondence set contains non-finite coordinates");
    }
  }
}

// Rank test on the unweighted Gram matrix: rank(A^T W A) equals rank(A) for
// any strictly positive W, and the unweighted pivots are immune to the
// extreme weight spread the L-half loss produces near interpolation points.
void check_rank(const std::vector<LinearTerm>& terms) {
  Mat6 gram = Mat6::Zero();
  for (const auto& t : terms) gram.noalias() += t.a.transpose() * t.a;
  const Vec6 d = Eigen::LDLT<Mat6>(gram).vectorD();
  if (!(d.minCoeff() > 1e-12 * d.maxCoeff())) {
    throw DegenerateGeometry(
        "normal equations are rank deficient (collinear or coincident "
        "points)");
  }
}

Vec6 solve_normal_6x6(const Mat6& h, const Vec6& g) {
  const Vec6 v = Eigen::LDLT<Mat6>(h).solve(g);
  if (!v.allFinite()) {
    throw DegenerateGeometry("weighted normal equations broke down");
  }
  return v;
}

// Shared outer loop; `retract` maps the solved 6-vector to the SE(3) update.
template <typename Retract>
RegistrationResult run_outer(const CorrespondenceSet& corrs,
                             const SolverConfig& config,
                             const RigidMotion& initial, Retract retract) {
  if (corrs.size() < 3) {
    throw DegenerateGeometry("pairwise estimation needs at least 3 pairs");
  }
  check_finite(corrs);

  RigidMotion m = initial;
  double mu = config.anneal ? config.anneal->mu0 : config.loss.mu;
  RegistrationResult result;
  result.trace.reserve(16);

  for (int k = 1; k <= config.max_outer; ++k) {
    const auto t0 = Clock::now();
    if (config.anneal && config.loss.kind == Loss::GemanMcClure) {
      mu = anneal(*config.anneal, mu, k);
    }
    const LossKind loss = config.loss.kind == Loss::GemanMcClure
                              ? LossKind::geman_mcclure(mu)
                              : config.loss;

    const auto terms = build_linear_terms(corrs, m);
    double cost = 0.0;
    for (const auto& t : terms) cost += loss_value(loss, t.b.norm());

    const Twist v =
        irls_solve(terms, loss, config.k_irls, config.residual_floor);
    m = compose(retract(v), m);
    if (k % 100 == 0) m.rotation = orthonormalized(m.rotation);

    result.trace.push_back({cost, v.norm(), ms_since(t0)});
    if (v.norm() <= config.epsilon) {
      result.converged = true;
      break;
    }
  }
  result.motion = m;
  return result;
}

}  // namespace

std::vector<LinearTerm> build_linear_terms(const CorrespondenceSet& corrs,
                                           const RigidMotion& m_prev) {
  std::vector<LinearTerm> terms(corrs.size());
  for (std::size_t s = 0; s < corrs.size(); ++s) {
    const Vec3 y = apply(m_prev, corrs.pairs[s].q);
    terms[s].a.leftCols<3>() = -hat3(y);
    terms[s].a.rightCols<3>() = Mat3::Identity();
    terms[s].b = corrs.pairs[s].p - y;
  }
  return terms;
}

Twist irls_solve(const std::vector<LinearTerm>& terms, const LossKind& loss,
                 int k_irls, double floor) {
  check_rank(terms);
  Vec6 v = Vec6::Zero();
  for (int round = 0; round < k_irls; ++round) {
    Mat6 h = Mat6::Zero();
    Vec6 g = Vec6::Zero();
    for (const auto& t : terms) {
      const double e = (t.a * v - t.b).norm();
      const double w = weight(loss, e, floor);
      h.noalias() += w * t.a.transpose() * t.a;
      g.noalias() += w * t.a.transpose() * t.b;
    }
    v = solve_normal_6x6(h, g);
  }
  return Twist::from_vec(v);
}

RegistrationResult estimate_pairwise(const CorrespondenceSet& corrs,
                                     const SolverConfig& config,
                                     const RigidMotion& initial) {
  if (config.parametrization == Parametrization::Extrinsic) {
    return estimate_pairwise_extrinsic(corrs, config, initial);
  }
  return run_outer(corrs, config, initial,
                   [](const Twist& v) { return exp_se3(v); });
}

RegistrationResult estimate_pairwise_extrinsic(const CorrespondenceSet& corrs,
                                               const SolverConfig& config,
                                               const RigidMotion& initial) {
  return run_outer(corrs, config, initial, [](const Twist& v) {
    return RigidMotion{exp_so3(v.omega), v.u};
  });
}

RigidMotion umeyama_closed_form(const CorrespondenceSet& corrs) {
  const std::size_t s = corrs.size();
  if (s < 3) {
    throw DegenerateGeometry("closed-form alignment needs at least 3 pairs");
  }
  Vec3 p_bar = Vec3::Zero();
  Vec3 q_bar = Vec3::Zero();
  for (const auto& c : corrs.pairs) {
    p_bar += c.p;
    q_bar += c.q;
  }
  p_bar /= static_cast<double>(s);
  q_bar /= static_cast<double>(s);

  Mat3 cov = Mat3::Zero();
  for (const auto& c : corrs.pairs) {
    cov.noalias() += (c.p - p_bar) * (c.q - q_bar).transpose();
  }
  cov /= static_cast<double>(s);

  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  if (!(sv(1) > 1e-12 * sv(0))) {
    throw DegenerateGeometry("point sets are collinear or coincident");
  }
  Mat3 d = Mat3::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) {
    d(2, 2) = -1.0;
  }
  const Mat3 r = svd.matrixU() * d * svd.matrixV().transpose();
  return {Rotation(r), p_bar - r * q_bar};
}

double robust_cost(const CorrespondenceSet& corrs, const RigidMotion& m,
                   const LossKind& loss) {
  double cost = 0.0;
  for (const auto& c : corrs.pairs) {
    cost += loss_value(loss, (c.p - apply(m, c.q)).norm());
  }
  return cost;
}

}  // namespace se3reg
