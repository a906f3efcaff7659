#pragma once

#include "ufmlab/linalg.hpp"
#include "ufmlab/model.hpp"

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace ufm::spectral {

using linalg::Vector;

/// Core of 1 1^T - Phi_K with the first row and column removed; entries in
/// {0, 2}, row sums K and Psi^2 = K (I + 1 1^T).
using PsiMatrix = Eigen::MatrixXi;

PsiMatrix psi_matrix(int K);

/// Reduced logit singular values a_1..a_{K-1} (mode 0 is identically zero and
/// is not stored).
struct SpectralState {
  Vector a;
  int K = 4;
  int L = 1;

  /// Throws std::invalid_argument unless K = 2^m, L >= 1, size K-1, a_i > 0.
  void validate() const;
};

/// Precomputes Psi for one (K, L) pair.
class ReducedDynamics {
 public:
  ReducedDynamics(int K, int L);

  int K() const { return K_; }
  int L() const { return L_; }
  int modes() const { return K_ - 1; }
  double exponent() const { return exponent_; }  // 2L / (L+1)
  const Eigen::MatrixXd& psi() const { return psi_; }

  /// da_i/dt = b_i a_i^{2L/(L+1)} / D with b = Psi e^{-Psi a} and
  /// D = 1 + sum_j e^{-(Psi a)_j}.
  Vector rhs(const Vector& a) const;
  /// b and D as above.
  void coupling(const Vector& a, Vector& b, double& D) const;
  /// a_i^{2L/(L+1)} (1 - a_i).
  Vector linearized_rhs(const Vector& a) const;

 private:
  int K_;
  int L_;
  double exponent_;
  Eigen::MatrixXd psi_;
};

Vector spectral_rhs(const SpectralState& state);
Vector linearized_rhs(const SpectralState& state);

struct TrajectoryRow {
  double t = 0.0;
  Vector a;
  double l1 = 0.0;
  Vector a_hat;
  double kl = 0.0;
  double eff_rank = 0.0;
};

struct StepController {
  /// Largest accepted max_i |da_i| / a_i per step.
  double max_relative_change = 0.01;
  double initial_step = 1e-3;
  double min_step = 1e-14;
  double max_step = 1e6;
  /// Record at these times (sorted); when empty every accepted step is recorded.
  std::vector<double> output_times;
  /// Optional early stop once ||a||_1 reaches this value (<= 0 disables).
  double stop_l1 = 0.0;
};

class StepUnderflow : public std::runtime_error {
 public:
  StepUnderflow(double t, Vector a)
      : std::runtime_error("RK4 step underflow at t = " + std::to_string(t)),
        t_(t),
        a_(std::move(a)) {}
  double t() const { return t_; }
  const Vector& state() const { return a_; }

 private:
  double t_;
  Vector a_;
};

TrajectoryRow make_row(double t, const Vector& a);

/// Adaptive RK4 on the reduced dynamics.  A step is rejected (and halved) if
/// any mode would become non-positive or change by more than the target
/// relative amount; accepted steps grow by 1.5x when well below target.
std::vector<TrajectoryRow> integrate(const SpectralState& state, double t_end,
                                     const StepController& controller = {});

/// Header t,a_1..a_{K-1},l1_norm,kl,eff_rank.
std::string trajectory_csv(const std::vector<TrajectoryRow>& rows, int K);

/// (L-1)(K-1)/(L+1): the ||a||_1 above which the uniform direction is stable.
double dnc_stability_threshold(int K, int L);

/// (K/(K-2))^{(L+1)/(L-1)}, the gamma/delta ratio above which the mixed
/// initialization keeps separating.  Throws std::domain_error for L = 1.
double kl_divergence_threshold(int K, int L);

/// a = [gamma, delta, gamma, ..., delta, gamma].
SpectralState mixed_init(int K, int L, double gamma, double delta);

/// Uniform [0,1) entries rescaled to the given L1 norm.
SpectralState random_state(int K, int L, double l1_norm, std::mt19937_64& rng);

/// Uniform direction (DNC) and the cross-polytope direction (2/K on the
/// odd-numbered modes, i.e. even 0-based indices).
Vector uniform_direction(int K);
Vector cross_polytope_direction(int K);

struct ProbeResult {
  /// d/dt || a_hat - direction ||_2 at the perturbed point.
  double derivative = 0.0;
  /// -1 attracting, +1 repelling, 0 stationary.
  int sign = 0;
};

/// Places a = scale * direction + p with p a random zero-sum perturbation of
/// L1 size `perturbation_size` (kept nonnegative on the zero entries of the
/// direction) and returns the sign of the instantaneous derivative of the
/// distance from a_hat to the direction.
ProbeResult stability_probe(const Vector& direction, double scale, int K, int L,
                            double perturbation_size, std::mt19937_64& rng);

struct FeasibleRank {
  int rank = 0;
  std::vector<int> witness;  // mode indices in 1..K-1
  long supports_checked = 0;
};

/// Margin feasibility of a support S of Hadamard modes, by a small LP
/// (maximize the minimal gap over the simplex on S).  Returns the optimal gap.
double support_margin_lp(int K, const std::vector<int>& support);
/// Feasible iff the GF(2) span of S is all of F_2^m.
bool support_spans(int K, const std::vector<int>& support);

/// Smallest support of Hadamard modes admitting strictly positive margins,
/// found by size-ordered exhaustive search.  Both criteria are evaluated on
/// every support visited and must agree (std::logic_error otherwise).
FeasibleRank min_feasible_rank(int K);

struct ScaleMap {
  double a_scale = 1.0;  // a_reduced = a_scale * a_full
  double t_scale = 1.0;  // t_reduced = t_scale * t_full
};

/// Change of variables from the balanced Hadamard flow of the full model
/// (logit singular values, gradient-flow time) to the reduced dynamics.
ScaleMap scale_map(const model::ProblemSpec& spec);

}  // namespace ufm::spectral
