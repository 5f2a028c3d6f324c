#include "se3reg/robust_loss.hpp"

#include <cmath>

#include "doctest.h"
#include "se3reg/errors.hpp"

using namespace se3reg;

TEST_CASE("loss values") {
  CHECK(loss_value(LossKind::l1(), 4.0) == 4.0);
  CHECK(loss_value(LossKind::l_half(), 4.0) == 2.0);
  // rho(e) = mu e^2 / (mu + e^2) at mu = 1, e = 1.
  CHECK(loss_value(LossKind::geman_mcclure(1.0), 1.0) == doctest::Approx(0.5));

  for (const auto kind :
       {LossKind::l_half(), LossKind::l1(), LossKind::geman_mcclure(2.0)}) {
    CHECK(loss_value(kind, 0.0) == 0.0);
    double prev = 0.0;
    for (double e = 0.01; e < 20.0; e *= 1.3) {
      const double v = loss_value(kind, e);
      CHECK(v >= prev);
      prev = v;
    }
  }
}

TEST_CASE("weights from the influence function") {
  // w = 2 mu^2 / (mu + e^2)^2
  CHECK(weight(LossKind::geman_mcclure(1.0), 1.0, 1e-12) ==
        doctest::Approx(0.5));
  // w = 1/e
  CHECK(weight(LossKind::l1(), 4.0, 1e-12) == doctest::Approx(0.25));
  // w = e^(-3/2)/2
  CHECK(weight(LossKind::l_half(), 4.0, 1e-12) == doctest::Approx(0.0625));
  // The floor clamps the evaluation point.
  CHECK(weight(LossKind::l_half(), 0.0, 1e-9) ==
        weight(LossKind::l_half(), 1e-9, 1e-9));
}

TEST_CASE("weight matches the finite difference of the loss") {
  const double h = 1e-6;
  for (const auto kind :
       {LossKind::l_half(), LossKind::l1(), LossKind::geman_mcclure(0.7)}) {
    for (double e = 0.01; e <= 10.0; e *= 1.17) {
      const double w = weight(kind, e, 1e-12);
      const double derivative =
          (loss_value(kind, e + h) - loss_value(kind, e - h)) / (2.0 * h);
      CHECK(std::abs(w * e - derivative) <= 1e-5 * std::max(1.0, w * e));
    }
  }
}

TEST_CASE("weights are positive, finite, and decreasing") {
  const double floor = 1e-12;
  for (const auto kind :
       {LossKind::l_half(), LossKind::l1(), LossKind::geman_mcclure(0.3)}) {
    double prev = std::numeric_limits<double>::infinity();
    for (double e = 1e-6; e <= 100.0; e *= 1.5) {
      const double w = weight(kind, e, floor);
      CHECK(w > 0.0);
      CHECK(std::isfinite(w));
      if (kind.kind == Loss::GemanMcClure) {
        CHECK(w <= prev);  // monotone nonincreasing
      } else {
        CHECK(w < prev);  // strictly decreasing above the floor
      }
      prev = w;
    }
  }
}

TEST_CASE("annealing schedule") {
  const AnnealSchedule sched{.mu0 = 8.0, .divisor = 2.0, .period = 4,
                             .mu_floor = 0.5};
  CHECK(anneal(sched, 8.0, 4) == 4.0);
  CHECK(anneal(sched, 8.0, 3) == 8.0);
  CHECK(anneal(sched, 8.0, 0) == 8.0);
  CHECK(anneal(sched, 8.0, 8) == 4.0);
  // Clamped at the floor.
  CHECK(anneal(sched, 0.5, 4) == 0.5);
  CHECK(anneal(sched, 0.6, 4) == 0.5);

  double mu = sched.mu0;
  for (int k = 1; k <= 100; ++k) mu = anneal(sched, mu, k);
  CHECK(mu == 0.5);
}

TEST_CASE("loss names") {
  CHECK(loss_name(LossKind::l_half()) == "l12");
  CHECK(loss_name(LossKind::l1()) == "l1");
  CHECK(loss_name(LossKind::geman_mcclure(2.0)) == "gm");
  CHECK(loss_from_name("gm", 3.0).mu == 3.0);
  CHECK(loss_from_name("l12", 0.0).kind == Loss::LHalf);
  CHECK_THROWS_AS(loss_from_name("huber", 1.0), Error);
}
