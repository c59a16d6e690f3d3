#pragma once

// Shared fixtures and independent reference computations for the tests.
// Nothing here calls into the code under test except to build models.

#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "handtwin/hand_model.hpp"
#include "json.hpp"

namespace testing_support {

using handtwin::ActuatedVector;
using handtwin::HandModel;

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline nlohmann::json default_model_json() {
  return nlohmann::json::parse(read_file(handtwin::data_path("default_hand.json")));
}

inline const HandModel& default_model() {
  static const HandModel model = handtwin::load_hand_model(handtwin::data_path("default_hand.json"));
  return model;
}

/// Model built from the default document after `edit` mutates it.
inline HandModel edited_model(const std::function<void(nlohmann::json&)>& edit) {
  nlohmann::json doc = default_model_json();
  edit(doc);
  return handtwin::parse_hand_model(doc.dump());
}

inline nlohmann::json& finger_json(nlohmann::json& doc, const std::string& name) {
  for (auto& f : doc["fingers"]) {
    if (f["name"] == name) return f;
  }
  throw std::runtime_error("no finger " + name);
}

inline ActuatedVector random_in_limits(const HandModel& model, std::mt19937_64& rng) {
  ActuatedVector q;
  for (int c = 0; c < handtwin::kActuatedJoints; ++c) {
    const auto& lim = model.channel_limits(c);
    q[c] = std::uniform_real_distribution<double>(lim.min, lim.max)(rng);
  }
  return q;
}

// Flexion-frame coupling written from the loop-closure identity
// tan(phi_D / 2) = k tan(phi_P / 2), without the library.
inline double ref_coupling(double k, double pip) { return 2.0 * std::atan(k * std::tan(0.5 * pip)); }

/**
 * Anti-parallelogram solved by a different route than the library oracle:
 * put the crossed link A-D at interior angle theta and find the output
 * angle beta at B such that |C - D| = l2, with C = B + l1 (cos(pi - beta),
 * sin(pi - beta)), beta in [-pi, pi]. The closure residual is scanned for
 * sign changes and bisected; the root other than the parallelogram branch
 * (beta = pi - theta) is returned.
 */
inline double loop_closure_output(double l1, double l2, double theta) {
  const Eigen::Vector2d a(0.0, 0.0), b(l2, 0.0);
  const Eigen::Vector2d d = a + l1 * Eigen::Vector2d(std::cos(theta), std::sin(theta));
  auto residual = [&](double beta) {
    const Eigen::Vector2d c = b + l1 * Eigen::Vector2d(-std::cos(beta), std::sin(beta));
    return (c - d).squaredNorm() - l2 * l2;
  };
  const double parallel = std::numbers::pi - theta;
  const int n = 20000;
  double best = std::numeric_limits<double>::quiet_NaN();
  double lo = -std::numbers::pi;
  double rlo = residual(lo);
  for (int i = 1; i <= 2 * n; ++i) {
    const double hi = -std::numbers::pi + std::numbers::pi * i / n;
    const double rhi = residual(hi);
    if (rlo == 0.0 || rlo * rhi < 0.0) {
      double x0 = lo, x1 = hi, r0 = rlo;
      for (int it = 0; it < 200 && x1 - x0 > 1e-15; ++it) {
        const double m = 0.5 * (x0 + x1);
        const double rm = residual(m);
        if ((r0 < 0.0) == (rm < 0.0)) {
          x0 = m;
          r0 = rm;
        } else {
          x1 = m;
        }
      }
      const double root = 0.5 * (x0 + x1);
      if (std::abs(root - parallel) > 1e-6) best = std::abs(root);
    }
    lo = hi;
    rlo = rhi;
  }
  return best;
}

/// Planar chain: tip of links L[i] with absolute angles a[i] in the x-z plane
/// (flexion curls toward +z).
inline Eigen::Vector2d planar_tip(const double* lengths, const double* abs_angles, int n) {
  Eigen::Vector2d p = Eigen::Vector2d::Zero();
  for (int i = 0; i < n; ++i) p += lengths[i] * Eigen::Vector2d(std::cos(abs_angles[i]), std::sin(abs_angles[i]));
  return p;
}

/// Bitwise CRC-16/CCITT-FALSE written against the published parameters,
/// processing one message bit at a time (MSB first) through the register.
inline std::uint16_t ref_crc16(const std::vector<std::uint8_t>& data) {
  std::uint32_t reg = 0xFFFF;
  for (std::uint8_t byte : data) {
    for (int bit = 7; bit >= 0; --bit) {
      const bool in = (byte >> bit) & 1;
      const bool top = (reg >> 15) & 1;
      reg = (reg << 1) & 0xFFFF;
      if (in != top) reg ^= 0x1021;
    }
  }
  return static_cast<std::uint16_t>(reg);
}

}  // namespace testing_support
