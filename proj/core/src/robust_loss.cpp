#include "se3reg/robust_loss.hpp"

#include <cmath>

#include "se3reg/errors.hpp"

namespace se3reg {

double loss_value(const LossKind& kind, double e) {
  switch (kind.kind) {
    case Loss::LHalf:
      return std::sqrt(e);
    case Loss::L1:
      return e;
    case Loss::GemanMcClure:
      return kind.mu * e * e / (kind.mu + e * e);
  }
  return 0.0;
}

double weight(const LossKind& kind, double e, double floor) {
  e = std::max(e, floor);
  switch (kind.kind) {
    case Loss::LHalf:
      // rho' = e^(-1/2)/2  =>  w = e^(-3/2)/2
      return 0.5 * std::pow(e, -1.5);
    case Loss::L1:
      return 1.0 / e;
    case Loss::GemanMcClure: {
      const double d = kind.mu + e * e;
      return 2.0 * kind.mu * kind.mu / (d * d);
    }
  }
  return 0.0;
}

double anneal(const AnnealSchedule& schedule, double mu, int outer_iter) {
  if (schedule.period > 0 && outer_iter > 0 &&
      outer_iter % schedule.period == 0) {
    mu /= schedule.divisor;
  }
  return std::max(mu, schedule.mu_floor);
}

std::string loss_name(const LossKind& kind) {
  switch (kind.kind) {
    case Loss::LHalf:
      return "l12";
    case Loss::L1:
      return "l1";
    case Loss::GemanMcClure:
      return "gm";
  }
  return "?";
}

LossKind loss_from_name(const std::string& name, double mu) {
  if (name == "l12") return LossKind::l_half();
  if (name == "l1") return LossKind::l1();
  if (name == "gm") return LossKind::geman_mcclure(mu);
  throw Error("unknown loss '" + name + "' (expected l12, l1 or gm)");
}

}  // namespace se3reg
