#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "se3reg/liegroup.hpp"
#include "se3reg/robust_loss.hpp"

namespace se3reg {

// One matched point pair. The motion being estimated maps q onto p, so the
// registration residual is |p - (R q + t)|.
struct Correspondence {
  Vec3 p = Vec3::Zero();
  Vec3 q = Vec3::Zero();
};

struct CorrespondenceSet {
  std::vector<Correspondence> pairs;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
};

// Intrinsic updates retract through the full exponential (t = P u);
// extrinsic updates apply the translational block directly, which is the
// approximation used by line-process solvers.
enum class Parametrization { Intrinsic, Extrinsic };

struct SolverConfig {
  LossKind loss = LossKind::l_half();
  std::optional<AnnealSchedule> anneal;  // Geman-McClure only
  int k_irls = 2;
  double epsilon = 1e-5;  // terminate when |v| <= epsilon
  int max_outer = 100;
  Parametrization parametrization = Parametrization::Intrinsic;
  double residual_floor = 1e-12;  // scale by scene diameter when known
};

// Linearized residual of one correspondence: e(v) = |a v - b| with
// a = [-[R_prev q + t_prev]x | I3] and b = p - (R_prev q + t_prev), so the
// zero twist reproduces the current residual.
struct LinearTerm {
  Mat36 a;
  Vec3 b;
};

struct TraceEntry {
  double cost = 0.0;         // robust cost of the motion entering the iteration
  double update_norm = 0.0;  // |v| of the applied update
  double elapsed_ms = 0.0;
};
using ConvergenceTrace = std::vector<TraceEntry>;

struct RegistrationResult {
  RigidMotion motion;
  ConvergenceTrace trace;
  bool converged = false;
};

std::vector<LinearTerm> build_linear_terms(const CorrespondenceSet& corrs,
                                           const RigidMotion& m_prev);

// k_irls rounds of {residuals from current v (starting at v = 0), weights,
// 6x6 weighted normal equations}. Throws DegenerateGeometry when the system
// loses rank (smallest pivot < 1e-12 x largest).
Twist irls_solve(const std::vector<LinearTerm>& terms, const LossKind& loss,
                 int k_irls, double floor);

// Robust pairwise estimation: relinearize, solve by IRLS, retract
// M <- exp(v^) M until |v| <= epsilon or max_outer. `initial` defaults to the
// identity; ICP passes the current motion to warm-start.
RegistrationResult estimate_pairwise(const CorrespondenceSet& corrs,
                                     const SolverConfig& config,
                                     const RigidMotion& initial = {});

// Same pipeline with the extrinsic update M <- (exp(w), t_inc) M. With
// k_irls = 1 this emulates the line-process solver.
RegistrationResult estimate_pairwise_extrinsic(const CorrespondenceSet& corrs,
                                               const SolverConfig& config,
                                               const RigidMotion& initial = {});

// Exact least-squares alignment (SVD of the cross-covariance with the
// determinant sign correction). Baseline and oracle for the robust solver.
RigidMotion umeyama_closed_form(const CorrespondenceSet& corrs);

// Robust cost sum_s rho(|p - M q|).
double robust_cost(const CorrespondenceSet& corrs, const RigidMotion& m,
                   const LossKind& loss);

}  // namespace se3reg
