#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "handtwin/error.hpp"
#include "handtwin/linkage.hpp"
#include "support.hpp"

using namespace handtwin;
namespace ts = testing_support;
using std::numbers::pi;

namespace {

// l1, l2 with the requested k and l1 + l2 = 0.05.
AntiparallelogramLinkage with_k(double k) { return AntiparallelogramLinkage::from_ratio(k, 0.05); }

}  // namespace

TEST_CASE("linkage rejects l1 <= l2 and non-positive lengths") {
  CHECK_THROWS_AS(AntiparallelogramLinkage(0.02, 0.02), ValidationError);
  CHECK_THROWS_AS(AntiparallelogramLinkage(0.01, 0.02), ValidationError);
  CHECK_THROWS_AS(AntiparallelogramLinkage(0.02, 0.0), ValidationError);
  CHECK_THROWS_AS(AntiparallelogramLinkage(NAN, 0.01), ValidationError);
  const AntiparallelogramLinkage link(0.03, 0.02);
  CHECK(link.k() == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("interior coupling examples") {
  const AntiparallelogramLinkage link(0.030, 0.020);
  CHECK(interior_coupling(link, pi / 2) == doctest::Approx(2 * std::atan(0.2)).epsilon(1e-14));
  CHECK(interior_coupling(link, pi / 2) == doctest::Approx(0.39479).epsilon(1e-5));
  CHECK(std::abs(interior_coupling(link, pi - 1e-9)) < 1e-8);
  CHECK(interior_coupling(link, pi) == 0.0);
  CHECK_THROWS_AS(interior_coupling(link, 0.0), DomainError);
  CHECK_THROWS_AS(interior_coupling(link, -0.1), DomainError);
  CHECK_THROWS_AS(interior_coupling(link, 3.5), DomainError);
}

TEST_CASE("coupling tends to zero as k tends to zero") {
  for (double theta : {0.2, 1.0, 2.5}) {
    const double c = interior_coupling(with_k(1e-9), theta);
    CHECK(c > 0.0);
    CHECK(c < 1e-9 * 2.0 / std::tan(theta / 2) * (1 + 1e-6));
  }
}

TEST_CASE("tan half-angle identity holds to 1e-12") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> uk(0.01, 0.99), ut(0.05, pi - 0.05);
  for (int i = 0; i < 2000; ++i) {
    const auto link = with_k(uk(rng));
    const double tp = ut(rng);
    const double td = interior_coupling(link, tp);
    CHECK(std::abs(std::tan(td / 2) * std::tan(tp / 2) - link.k()) < 1e-12);
  }
}

TEST_CASE("flexion coupling examples") {
  CHECK(flexion_coupling(with_k(0.2), 0.0) == 0.0);
  CHECK(flexion_coupling(with_k(0.2), pi / 2) == doctest::Approx(0.39479).epsilon(1e-5));
  CHECK(flexion_coupling(with_k(0.66), pi / 2) == doctest::Approx(1.1667).epsilon(1e-4));
  CHECK(flexion_coupling(with_k(0.66), pi / 2) == doctest::Approx(2 * std::atan(0.66)).epsilon(1e-14));
  CHECK_THROWS_AS(flexion_coupling(with_k(0.2), -0.01), DomainError);
  CHECK_THROWS_AS(flexion_coupling(with_k(0.2), pi), DomainError);
}

TEST_CASE("flexion coupling equals interior form at pi - phi") {
  const auto link = with_k(0.37);
  for (int i = 1; i < 100; ++i) {
    const double phi = pi * i / 100;
    CHECK(flexion_coupling(link, phi) == doctest::Approx(interior_coupling(link, pi - phi)).epsilon(1e-12));
  }
}

TEST_CASE("flexion coupling is increasing and below the identity on (0, pi/2]") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> uk(0.001, 0.999);
  for (int trial = 0; trial < 50; ++trial) {
    const auto link = with_k(uk(rng));
    double prev = -1.0;
    for (int i = 0; i < 400; ++i) {
      const double phi = (pi - 1e-6) * i / 400;
      const double d = flexion_coupling(link, phi);
      CHECK(d > prev);
      CHECK(d >= 0.0);
      CHECK(d < pi);
      if (phi > 0 && phi <= pi / 2) CHECK(d <= phi);
      prev = d;
    }
  }
}

TEST_CASE("inverse coupling") {
  const auto link = with_k(0.2);
  CHECK(flexion_coupling_inverse(link, 0.0) == 0.0);
  CHECK(flexion_coupling_inverse(link, 2 * std::atan(0.2)) == doctest::Approx(pi / 2).epsilon(1e-12));
  CHECK_THROWS_AS(flexion_coupling_inverse(link, -1e-3), DomainError);
  CHECK_THROWS_AS(flexion_coupling_inverse(link, pi), DomainError);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> uk(0.01, 0.99);
  for (int trial = 0; trial < 20; ++trial) {
    const auto l = with_k(uk(rng));
    for (int i = 0; i < 200; ++i) {
      const double phi = (pi - 1e-3) * i / 200;
      CHECK(std::abs(flexion_coupling_inverse(l, flexion_coupling(l, phi)) - phi) < 1e-10);
      CHECK(std::abs(flexion_coupling(l, flexion_coupling_inverse(l, flexion_coupling(l, phi))) -
                     flexion_coupling(l, phi)) < 1e-10);
    }
  }
}

TEST_CASE("coupling derivative") {
  CHECK(flexion_coupling_derivative(with_k(0.2), 0.0) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(flexion_coupling_derivative(with_k(0.2), pi / 2) == doctest::Approx(0.4 / 1.04).epsilon(1e-12));
  CHECK(flexion_coupling_derivative(with_k(0.2), pi / 2) == doctest::Approx(0.38462).epsilon(1e-5));
  CHECK_THROWS_AS(flexion_coupling_derivative(with_k(0.2), pi), DomainError);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> uk(0.01, 0.99);
  const double h = 1e-7;
  for (int trial = 0; trial < 20; ++trial) {
    const double k = uk(rng);
    const auto link = with_k(k);
    for (int i = 0; i < 100; ++i) {
      const double phi = 0.01 + 2.9 * i / 100;
      const double fd = (ts::ref_coupling(k, phi + h) - ts::ref_coupling(k, phi - h)) / (2 * h);
      CHECK(std::abs(flexion_coupling_derivative(link, phi) - fd) < 1e-6);
      CHECK(flexion_coupling_derivative(link, phi) > 0.0);
    }
  }
}

TEST_CASE("k-parameterised derivative matches finite differences") {
  const double h = 1e-7;
  for (double k : {0.0, 0.1, 0.4, 0.8}) {
    for (double phi : {0.2, 1.0, 2.0}) {
      const double fd = (ts::ref_coupling(k, phi + h) - ts::ref_coupling(k, phi - h)) / (2 * h);
      CHECK(std::abs(flexion_coupling_derivative_k(k, phi) - fd) < 1e-6);
    }
  }
}

TEST_CASE("geometric oracle agrees with an independent loop-closure solve") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> len(0.005, 0.04), ut(0.1, pi - 0.1);
  for (int i = 0; i < 30; ++i) {
    double a = len(rng), b = len(rng);
    if (a < b) std::swap(a, b);
    if (a - b < 1e-3) a = b + 2e-3;
    const AntiparallelogramLinkage link(a, b);
    const double theta = ut(rng);
    const double ref = ts::loop_closure_output(a, b, theta);
    REQUIRE(std::isfinite(ref));
    CHECK(std::abs(four_bar_oracle(link, theta) - ref) < 1e-9);
    CHECK(std::abs(interior_coupling(link, theta) - ref) < 1e-9);
  }
}

TEST_CASE("closed form equals the geometric oracle over 1e4 random pairs") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> uk(0.001, 0.999), ut(1e-3, pi - 1e-3);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const auto link = with_k(uk(rng));
    const double tp = ut(rng);
    worst = std::max(worst, std::abs(four_bar_oracle(link, tp) - interior_coupling(link, tp)));
  }
  CHECK(worst < 1e-9);
  const AntiparallelogramLinkage link(0.03, 0.02);
  CHECK(four_bar_oracle(link, pi / 2) == doctest::Approx(0.39479).epsilon(1e-5));
  CHECK(std::abs(four_bar_oracle(link, pi - 1e-9)) < 1e-7);
}

TEST_CASE("trajectory table validation and CSV") {
  CHECK_THROWS_AS(TrajectoryTable({{0.1, 0.0}, {0.1, 0.2}}), ValidationError);
  CHECK_THROWS_AS(TrajectoryTable({{0.2, 0.0}, {0.1, 0.2}}), ValidationError);
  CHECK_THROWS_AS(TrajectoryTable({{-0.1, 0.0}}), ValidationError);
  CHECK_THROWS_AS(TrajectoryTable({{0.1, NAN}}), ValidationError);
  CHECK_THROWS_AS(TrajectoryTable({{0.1, 3.2}}), ValidationError);

  const auto t = TrajectoryTable::from_ratio(0.4, 0.0, 1.5, 7);
  const auto back = TrajectoryTable::parse_csv(t.to_csv());
  REQUIRE(back.size() == 7);
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(back.samples()[i].first == t.samples()[i].first);
    CHECK(back.samples()[i].second == t.samples()[i].second);
  }
  CHECK_THROWS_AS(TrajectoryTable::parse_csv("0.1,0.2\n0.3,0.4\n"), ParseError);
  CHECK_THROWS_AS(TrajectoryTable::parse_csv("pip_rad,dip_rad\n0.1,abc\n"), ParseError);
  CHECK_THROWS_AS(TrajectoryTable::from_csv("/nonexistent/curve.csv"), IoError);
}

TEST_CASE("sigmoid generator evaluates the documented formula") {
  const TrajectoryTable::Sigmoid s{1.2, 4.0, 0.8, 0.05};
  const auto t = TrajectoryTable::from_sigmoid(s, 0.0, 1.6, 17);
  REQUIRE(t.size() == 17);
  for (const auto& [pip, dip] : t.samples()) {
    CHECK(dip == doctest::Approx(1.2 / (1.0 + std::exp(-4.0 * (pip - 0.8))) + 0.05).epsilon(1e-14));
  }
}

TEST_CASE("synthesis recovers a self-generated ratio") {
  const auto fit = synthesize_linkage(TrajectoryTable::from_ratio(0.3, 0.0, 1.7, 50), 0.05);
  CHECK(std::abs(fit.linkage.k() - 0.3) < 1e-6);
  CHECK(fit.rms < 1e-8);
  CHECK(fit.linkage.l1() + fit.linkage.l2() == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(fit.residuals.size() == 50);
}

TEST_CASE("synthesis under noise stays near the generating ratio") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> noise(-0.01, 0.01);
  double worst = 0.0;
  for (int seed = 0; seed < 100; ++seed) {
    std::vector<TrajectoryTable::Sample> s;
    for (int i = 0; i < 40; ++i) {
      const double pip = 1.7 * i / 39;
      s.emplace_back(pip, std::max(0.0, ts::ref_coupling(0.66, pip) + noise(rng)));
    }
    worst = std::max(worst, std::abs(synthesize_linkage(TrajectoryTable(s), 0.05).linkage.k() - 0.66));
  }
  CHECK(worst < 0.02);
}

TEST_CASE("synthesis never loses to the 0.001 grid") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<TrajectoryTable::Sample> s;
    double pip = 0.0;
    for (int i = 0; i < 25; ++i) {
      pip += 0.01 + 0.1 * u(rng);
      s.emplace_back(pip, 2.0 * u(rng));
    }
    const TrajectoryTable target(s);
    const auto fit = synthesize_linkage(target, 0.04);
    double grid = 1e300;
    for (int i = 1; i <= 999; ++i) {
      double ss = 0.0;
      for (const auto& [p, d] : s) ss += std::pow(ts::ref_coupling(i / 1000.0, p) - d, 2);
      grid = std::min(grid, std::sqrt(ss / s.size()));
    }
    CHECK(fit.rms <= grid + 1e-9);
  }
}

TEST_CASE("synthesis is scale invariant") {
  const auto target = TrajectoryTable::from_sigmoid({1.0, 5.0, 0.9, 0.0}, 0.0, 1.6, 30);
  const auto a = synthesize_linkage(target, 0.02);
  const auto b = synthesize_linkage(target, 0.2);
  CHECK(a.linkage.k() == doctest::Approx(b.linkage.k()).epsilon(1e-12));
  CHECK(a.rms == doctest::Approx(b.rms).epsilon(1e-12));
  CHECK(b.linkage.l1() == doctest::Approx(10 * a.linkage.l1()).epsilon(1e-12));
}

TEST_CASE("synthesis rejects empty targets and bad scale") {
  CHECK_THROWS_AS(synthesize_linkage(TrajectoryTable({}), 0.05), ValidationError);
  CHECK_THROWS_AS(synthesize_linkage(TrajectoryTable::from_ratio(0.3, 0.0, 1.0, 5), 0.0), ValidationError);
}
