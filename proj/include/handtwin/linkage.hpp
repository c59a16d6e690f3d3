#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace handtwin {

/**
 * Crossed four-bar (anti-parallelogram) that passively couples a driven joint
 * to its driver. The two crossed links have length l1, the ground and coupler
 * have length l2. Only k = (l1 - l2) / (l1 + l2) affects the angle mapping.
 */
class AntiparallelogramLinkage {
 public:
  /// Throws ValidationError unless l1 > l2 > 0 (both finite).
  AntiparallelogramLinkage(double l1, double l2);

  /// Linkage with l1 + l2 = l_sum and the given ratio k in (0, 1).
  static AntiparallelogramLinkage from_ratio(double k, double l_sum);

  double l1() const noexcept { return l1_; }
  double l2() const noexcept { return l2_; }
  double k() const noexcept { return k_; }

  bool operator==(const AntiparallelogramLinkage&) const = default;

 private:
  double l1_;
  double l2_;
  double k_;
};

// Interior-angle form. theta_p in (0, pi]; theta_p == pi returns 0.
double interior_coupling(const AntiparallelogramLinkage& link, double theta_p);

// Flexion-frame form: interior angle theta_p = pi - pip_flexion. Zero flexion
// maps to zero flexion. Domain [0, pi).
double flexion_coupling(const AntiparallelogramLinkage& link, double pip_flexion);
double flexion_coupling_inverse(const AntiparallelogramLinkage& link, double dip_flexion);
double flexion_coupling_derivative(const AntiparallelogramLinkage& link, double pip_flexion);

// k-parameterised variants used by synthesis and retargeting, where k is the
// free variable. k must lie in [0, 1).
double flexion_coupling_k(double k, double pip_flexion);
double flexion_coupling_derivative_k(double k, double pip_flexion);

/**
 * Planar position analysis of the linkage, independent of the closed form:
 * ground pivots A=(0,0), B=(l2,0); crossed link A-D of length l1 at interior
 * angle theta_p; C found by circle-circle intersection of |BC| = l1 and
 * |DC| = l2, keeping the crossed branch. Returns the interior angle ABC.
 * Throws DomainError for theta_p outside (0, pi] or when the circles do not
 * intersect.
 */
double four_bar_oracle(const AntiparallelogramLinkage& link, double theta_p);

/// Ordered (pip, dip) flexion samples in radians.
class TrajectoryTable {
 public:
  using Sample = std::pair<double, double>;

  /// Validates strictly increasing pip, finite values, both in [0, pi).
  explicit TrajectoryTable(std::vector<Sample> samples);

  const std::vector<Sample>& samples() const noexcept { return samples_; }
  std::size_t size() const noexcept { return samples_.size(); }

  /// CSV with a required `pip_rad,dip_rad` header row.
  static TrajectoryTable from_csv(const std::string& path);
  static TrajectoryTable parse_csv(const std::string& text);
  std::string to_csv() const;

  /// Sigmoid curve dip = a / (1 + exp(-b (pip - c))) + d sampled uniformly on [pip_lo, pip_hi].
  struct Sigmoid {
    double a;
    double b;
    double c;
    double d;
  };
  static TrajectoryTable from_sigmoid(const Sigmoid& params, double pip_lo, double pip_hi,
                                      std::size_t count);

  /// Samples of flexion_coupling for ratio k on a uniform pip grid.
  static TrajectoryTable from_ratio(double k, double pip_lo, double pip_hi, std::size_t count);

 private:
  std::vector<Sample> samples_;
};

struct LinkageFit {
  AntiparallelogramLinkage linkage;
  double rms = 0.0;  // rad
  std::vector<double> residuals;  // coupling(pip_i) - dip_i
  int newton_iterations = 0;
  bool grid_fallback = false;  // true when the optimum sits on the search boundary
};

/// Sum of squared coupling residuals against `target` for ratio k.
double linkage_fit_objective(const TrajectoryTable& target, double k);

/**
 * Least-squares fit of the coupling ratio k in (0, 1) to a DIP-vs-PIP target,
 * with l1 + l2 = l_sum fixing the scale. A dense scan brackets the global
 * minimum, then safeguarded Newton iteration on the gradient polishes it.
 */
LinkageFit synthesize_linkage(const TrajectoryTable& target, double l_sum);

}  // namespace handtwin
