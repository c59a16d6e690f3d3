#include "handtwin/linkage.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "handtwin/error.hpp"

namespace handtwin {

namespace {

constexpr double kPi = std::numbers::pi;

void require_flexion_domain(double phi, const char* what) {
  if (!std::isfinite(phi) || phi < 0.0 || phi >= kPi) {
    std::ostringstream os;
    os << what << " " << phi << " outside [0, pi)";
    throw DomainError(os.str());
  }
}

// d(coupling)/dk for fixed pip flexion.
double coupling_dk(double k, double pip) {
  const double t = std::tan(0.5 * pip);
  return 2.0 * t / (1.0 + k * k * t * t);
}

double coupling_dk2(double k, double pip) {
  const double t = std::tan(0.5 * pip);
  const double den = 1.0 + k * k * t * t;
  return -4.0 * k * t * t * t / (den * den);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

AntiparallelogramLinkage::AntiparallelogramLinkage(double l1, double l2) : l1_(l1), l2_(l2) {
  if (!std::isfinite(l1) || !std::isfinite(l2)) {
    throw ValidationError("linkage", "lengths must be finite");
  }
  if (!(l2 > 0.0)) throw ValidationError("linkage.l2", "must be > 0");
  if (!(l1 > l2)) {
    throw ValidationError("linkage.l1", "must exceed l2 (l1 == l2 gives zero coupling)");
  }
  k_ = (l1_ - l2_) / (l1_ + l2_);
}

AntiparallelogramLinkage AntiparallelogramLinkage::from_ratio(double k, double l_sum) {
  if (!(k > 0.0 && k < 1.0)) throw ValidationError("linkage.k", "must lie in (0, 1)");
  if (!(l_sum > 0.0) || !std::isfinite(l_sum)) {
    throw ValidationError("linkage.l_sum", "must be positive and finite");
  }
  return {0.5 * l_sum * (1.0 + k), 0.5 * l_sum * (1.0 - k)};
}

double interior_coupling(const AntiparallelogramLinkage& link, double theta_p) {
  if (!std::isfinite(theta_p) || theta_p <= 0.0 || theta_p > kPi) {
    throw DomainError("interior angle outside (0, pi]");
  }
  if (theta_p == kPi) return 0.0;
  return 2.0 * std::atan(link.k() / std::tan(0.5 * theta_p));
}

double flexion_coupling_k(double k, double pip_flexion) {
  require_flexion_domain(pip_flexion, "pip flexion");
  return 2.0 * std::atan(k * std::tan(0.5 * pip_flexion));
}

double flexion_coupling_derivative_k(double k, double pip_flexion) {
  require_flexion_domain(pip_flexion, "pip flexion");
  const double t = std::tan(0.5 * pip_flexion);
  return k * (1.0 + t * t) / (1.0 + k * k * t * t);
}

double flexion_coupling(const AntiparallelogramLinkage& link, double pip_flexion) {
  return flexion_coupling_k(link.k(), pip_flexion);
}

double flexion_coupling_inverse(const AntiparallelogramLinkage& link, double dip_flexion) {
  require_flexion_domain(dip_flexion, "dip flexion");
  return 2.0 * std::atan(std::tan(0.5 * dip_flexion) / link.k());
}

double flexion_coupling_derivative(const AntiparallelogramLinkage& link, double pip_flexion) {
  return flexion_coupling_derivative_k(link.k(), pip_flexion);
}

double four_bar_oracle(const AntiparallelogramLinkage& link, double theta_p) {
  if (!std::isfinite(theta_p) || theta_p <= 0.0 || theta_p > kPi) {
    throw DomainError("interior angle outside (0, pi]");
  }
  const double crossed = link.l1();
  const double ground = link.l2();

  const double ax = 0.0, ay = 0.0;
  const double bx = ground, by = 0.0;
  const double dx = crossed * std::cos(theta_p), dy = crossed * std::sin(theta_p);

  // C lies on circle(B, crossed) and circle(D, ground).
  const double ux = dx - bx, uy = dy - by;
  const double dist = std::hypot(ux, uy);
  if (dist > crossed + ground || dist < crossed - ground || dist == 0.0) {
    throw DomainError("four-bar circles do not intersect");
  }
  const double along = (crossed * crossed - ground * ground + dist * dist) / (2.0 * dist);
  const double h2 = crossed * crossed - along * along;
  const double h = std::sqrt(std::max(0.0, h2));
  const double ex = ux / dist, ey = uy / dist;
  const double px = bx + along * ex, py = by + along * ey;
  const double c1x = px - h * ey, c1y = py + h * ex;
  const double c2x = px + h * ey, c2y = py - h * ex;

  // The open (parallelogram) branch puts C at D + (B - A); keep the other one.
  const double parx = dx + (bx - ax), pary = dy + (by - ay);
  const double e1 = std::hypot(c1x - parx, c1y - pary);
  const double e2 = std::hypot(c2x - parx, c2y - pary);
  const double cx = e1 > e2 ? c1x : c2x;
  const double cy = e1 > e2 ? c1y : c2y;

  const double bax = ax - bx, bay = ay - by;
  const double bcx = cx - bx, bcy = cy - by;
  return std::atan2(std::abs(bax * bcy - bay * bcx), bax * bcx + bay * bcy);
}

TrajectoryTable::TrajectoryTable(std::vector<Sample> samples) : samples_(std::move(samples)) {
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const auto [pip, dip] = samples_[i];
    const std::string field = "samples[" + std::to_string(i) + "]";
    if (!std::isfinite(pip) || !std::isfinite(dip)) throw ValidationError(field, "non-finite value");
    if (pip < 0.0 || pip >= kPi) throw ValidationError(field, "pip outside [0, pi)");
    if (dip < 0.0 || dip >= kPi) throw ValidationError(field, "dip outside [0, pi)");
    if (i > 0 && !(pip > samples_[i - 1].first)) {
      throw ValidationError(field, "pip values must be strictly increasing");
    }
  }
}

TrajectoryTable TrajectoryTable::parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::vector<Sample> samples;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    if (!have_header) {
      std::string compact;
      for (char c : line) {
        if (c != ' ' && c != '\t') compact.push_back(c);
      }
      if (compact != "pip_rad,dip_rad") {
        throw ParseError("line " + std::to_string(line_no) + ": expected header 'pip_rad,dip_rad'");
      }
      have_header = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      throw ParseError("line " + std::to_string(line_no) + ": expected two columns");
    }
    try {
      std::size_t used = 0;
      const std::string a = trim(line.substr(0, comma));
      const std::string b = trim(line.substr(comma + 1));
      const double pip = std::stod(a, &used);
      if (used != a.size()) throw std::invalid_argument(a);
      const double dip = std::stod(b, &used);
      if (used != b.size()) throw std::invalid_argument(b);
      samples.emplace_back(pip, dip);
    } catch (const std::logic_error&) {
      throw ParseError("line " + std::to_string(line_no) + ": malformed number");
    }
  }
  if (!have_header) throw ParseError("missing 'pip_rad,dip_rad' header");
  return TrajectoryTable(std::move(samples));
}

TrajectoryTable TrajectoryTable::from_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_csv(ss.str());
}

std::string TrajectoryTable::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "pip_rad,dip_rad\n";
  for (const auto& [pip, dip] : samples_) os << pip << ',' << dip << '\n';
  return os.str();
}

TrajectoryTable TrajectoryTable::from_sigmoid(const Sigmoid& p, double pip_lo, double pip_hi,
                                              std::size_t count) {
  if (count < 2) throw ValidationError("count", "need at least two samples");
  std::vector<Sample> samples;
  samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double pip = pip_lo + (pip_hi - pip_lo) * double(i) / double(count - 1);
    samples.emplace_back(pip, p.a / (1.0 + std::exp(-p.b * (pip - p.c))) + p.d);
  }
  return TrajectoryTable(std::move(samples));
}

TrajectoryTable TrajectoryTable::from_ratio(double k, double pip_lo, double pip_hi,
                                            std::size_t count) {
  if (count < 2) throw ValidationError("count", "need at least two samples");
  std::vector<Sample> samples;
  samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double pip = pip_lo + (pip_hi - pip_lo) * double(i) / double(count - 1);
    samples.emplace_back(pip, flexion_coupling_k(k, pip));
  }
  return TrajectoryTable(std::move(samples));
}

double linkage_fit_objective(const TrajectoryTable& target, double k) {
  double sum = 0.0;
  for (const auto& [pip, dip] : target.samples()) {
    const double r = flexion_coupling_k(k, pip) - dip;
    sum += r * r;
  }
  return sum;
}

namespace {

struct Derivs {
  double grad = 0.0;
  double hess = 0.0;
};

Derivs objective_derivs(const TrajectoryTable& target, double k) {
  Derivs d;
  for (const auto& [pip, dip] : target.samples()) {
    const double r = flexion_coupling_k(k, pip) - dip;
    const double j = coupling_dk(k, pip);
    d.grad += 2.0 * r * j;
    d.hess += 2.0 * (j * j + r * coupling_dk2(k, pip));
  }
  return d;
}

// Newton on the gradient inside a sign-change bracket [lo, hi] (grad(lo) < 0 < grad(hi)),
// bisecting whenever the Newton step leaves the bracket or stalls.
double newton_bracketed(const TrajectoryTable& target, double lo, double hi, double start,
                        int& iterations) {
  double k = start;
  double step_prev = hi - lo;
  for (iterations = 0; iterations < 100; ++iterations) {
    const Derivs d = objective_derivs(target, k);
    if (d.grad == 0.0) break;
    if (d.grad < 0.0) lo = k; else hi = k;
    double next = k - d.grad / d.hess;
    const bool newton_ok = d.hess > 0.0 && next > lo && next < hi &&
                           std::abs(next - k) < 0.5 * step_prev;
    if (!newton_ok) next = 0.5 * (lo + hi);
    step_prev = std::abs(next - k);
    k = next;
    if (step_prev < 1e-15 || hi - lo < 1e-15) break;
  }
  return k;
}

}  // namespace

LinkageFit synthesize_linkage(const TrajectoryTable& target, double l_sum) {
  if (target.size() == 0) throw ValidationError("target", "trajectory table is empty");
  if (!(l_sum > 0.0) || !std::isfinite(l_sum)) {
    throw ValidationError("l_sum", "must be positive and finite");
  }

  constexpr double k_min = 1e-6;
  constexpr double k_max = 1.0 - 1e-6;
  constexpr int grid = 4000;

  auto grid_k = [&](int i) { return k_min + (k_max - k_min) * double(i) / double(grid); };
  int best_i = 0;
  double best_f = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= grid; ++i) {
    const double f = linkage_fit_objective(target, grid_k(i));
    if (f < best_f) {
      best_f = f;
      best_i = i;
    }
  }

  double best_k = grid_k(best_i);
  const double lo = grid_k(std::max(0, best_i - 1));
  const double hi = grid_k(std::min(grid, best_i + 1));
  const double g_lo = objective_derivs(target, lo).grad;
  const double g_hi = objective_derivs(target, hi).grad;

  LinkageFit fit{AntiparallelogramLinkage::from_ratio(best_k, l_sum), 0.0, {}, 0, false};
  if (g_lo < 0.0 && g_hi > 0.0) {
    int iters = 0;
    const double polished = newton_bracketed(target, lo, hi, best_k, iters);
    fit.newton_iterations = iters;
    if (linkage_fit_objective(target, polished) <= best_f) {
      best_k = polished;
      best_f = linkage_fit_objective(target, polished);
    }
  } else {
    // Minimum on the boundary of (0, 1) or a flat objective: the scan value stands.
    fit.grid_fallback = true;
  }

  fit.linkage = AntiparallelogramLinkage::from_ratio(best_k, l_sum);
  fit.residuals.reserve(target.size());
  for (const auto& [pip, dip] : target.samples()) {
    fit.residuals.push_back(flexion_coupling_k(best_k, pip) - dip);
  }
  fit.rms = std::sqrt(best_f / double(target.size()));
  return fit;
}

}  // namespace handtwin
