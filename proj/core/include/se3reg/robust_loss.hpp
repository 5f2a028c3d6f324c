#pragma once

#include <string>

namespace se3reg {

enum class Loss { LHalf, L1, GemanMcClure };

// rho(e) for e >= 0:
//   LHalf         sqrt(e)
//   L1            e
//   GemanMcClure  mu e^2 / (mu + e^2), mu in squared length units
struct LossKind {
  Loss kind = Loss::LHalf;
  double mu = 1.0;  // only meaningful for GemanMcClure; must be > 0

  static LossKind l_half() { return {Loss::LHalf, 1.0}; }
  static LossKind l1() { return {Loss::L1, 1.0}; }
  static LossKind geman_mcclure(double mu) { return {Loss::GemanMcClure, mu}; }
};

// Divides mu by `divisor` every `period` outer iterations, never below
// mu_floor.
struct AnnealSchedule {
  double mu0 = 1.0;
  double divisor = 2.0;
  int period = 4;
  double mu_floor = 1e-8;
};

double loss_value(const LossKind& kind, double e);

// IRLS weight w = rho'(e)/e, evaluated at max(e, floor). The floor keeps the
// L1 and LHalf weights finite at e = 0.
double weight(const LossKind& kind, double e, double floor);

// Returns mu/divisor when outer_iter is a positive multiple of the period,
// otherwise mu; the result is clamped to mu_floor.
double anneal(const AnnealSchedule& schedule, double mu, int outer_iter);

// "l12", "l1", "gm" <-> LossKind (names used by the CLI and CSV output).
std::string loss_name(const LossKind& kind);
LossKind loss_from_name(const std::string& name, double mu);

}  // namespace se3reg
