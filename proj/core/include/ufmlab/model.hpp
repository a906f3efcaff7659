#pragma once

#include "ufmlab/linalg.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ufm::model {

using linalg::Matrix;

/// Dimensions of a deep UFM run: K classes, n samples per class, width d and
/// depth L (number of weight matrices above the features).
struct ProblemSpec {
  int K = 2;
  int n = 1;
  int d = 2;
  int L = 1;

  /// Throws std::invalid_argument unless K >= 2, n >= 1, L >= 1, d >= K.
  void validate() const;
  int samples() const { return K * n; }
};

/// W_L, ..., W_1, H_1 stored bottom-up: factors[0] = H_1 (d x nK),
/// factors[l] = W_l (d x d for 1 <= l < L), factors[L] = W_L (K x d).
struct ModelParams {
  std::vector<Matrix> factors;

  int depth() const { return static_cast<int>(factors.size()) - 1; }
  const Matrix& features() const { return factors.front(); }
  const Matrix& top() const { return factors.back(); }
  Matrix& features() { return factors.front(); }
  Matrix& top() { return factors.back(); }

  /// Throws std::invalid_argument on a shape mismatch or a non-finite entry.
  void validate(const ProblemSpec& spec) const;
};

/// One entry per factor, same shapes as ModelParams::factors.
using GradientBundle = std::vector<Matrix>;

/// Z = W_L ... W_1 H_1.
Matrix logits(const ModelParams& params);

/// Y = I_K (x) 1_n^T.
Matrix one_hot_targets(const ProblemSpec& spec);

/// Column-wise softmax with max subtraction.
Matrix softmax_matrix(const Matrix& z);

/// Summed cross-entropy of logits in class order against one-hot targets.
double ce_loss_of_logits(const Matrix& z, int n);
double ce_loss(const ModelParams& params, const ProblemSpec& spec);

/// Gradient-flow velocity dW_l/dt = A_{l+1}^T (Y - P) H_l^T - 2 lambda W_l.
/// At lambda = 0 this is the negative loss gradient.
GradientBundle flow_rhs(const ModelParams& params, const ProblemSpec& spec, double lambda);

/// dZ/dt = sum_l A_{l+1} A_{l+1}^T (Y - P) H_l^T H_l.
Matrix logit_velocity(const ModelParams& params, const ProblemSpec& spec);

/// Every factor is eps * N(0, 1/d), drawn in factor order from one seeded stream.
ModelParams random_init(const ProblemSpec& spec, double eps, std::uint64_t seed);

/// Balanced Hadamard initialization.  `alpha` holds the K per-mode singular
/// values shared by every factor (mode 0 conventionally 0); the resulting
/// logit matrix is U diag(alpha^{L+1}/sqrt n) U^T (x) 1_n^T with
/// U = Phi_K / sqrt(K).
ModelParams hadamard_init(const ProblemSpec& spec, const std::vector<double>& alpha,
                          std::uint64_t rotation_seed);

/// hadamard_init plus the fixed singular frames: W_L = U D R_L^T,
/// W_l = R_{l+1} D R_l^T, H_1 = R_1 D V_K^T.
struct HadamardFrame {
  ModelParams params;
  Matrix U;                      // Phi_K / sqrt(K)
  Matrix V_K;                    // nK x K, columns u_i (x) 1_n / sqrt(n)
  std::vector<Matrix> rotations;  // R_1 .. R_L, each d x d
};
HadamardFrame hadamard_init_with_frame(const ProblemSpec& spec, const std::vector<double>& alpha,
                                       std::uint64_t rotation_seed);

/// Sum of squared Frobenius norms of all factors.
double parameter_norm_squared(const ModelParams& params);

/// max_l || What_l^T What_l - What_{l-1} What_{l-1}^T ||_F with every factor
/// Frobenius-normalized.  Throws std::domain_error on a zero factor.
double balancedness_residual(const ModelParams& params);

struct Margins {
  double raw = 0.0;
  double normalized = 0.0;
};

/// Minimal (z_ic)_c - (z_ic)_c' over the dataset, raw and on Z / ||Z||_F.
Margins margins(const Matrix& z, const ProblemSpec& spec);

struct TrainSchedule {
  double step_size = 0.08;
  long epochs_phase1 = 0;
  double lambda_phase1 = 0.0;
  long epochs_phase2 = 0;
  long log_every = 1000;
  std::optional<double> stop_loss = 1e-6;
  /// Halvings allowed before a run is declared divergent.
  int max_halvings = 20;

  void validate() const;
};

/// One logged row of diagnostics.
struct RunRow {
  long epoch = 0;
  double loss = 0.0;
  std::vector<double> factor_norms;  // ||W_0||_F .. ||W_L||_F
  double logit_norm = 0.0;
  double eff_rank = 0.0;
  double kl = 0.0;
  double raw_margin = 0.0;
  double norm_margin = 0.0;
  double balance_residual = 0.0;
  double dist_to_etf = 0.0;
};

struct RunLog {
  int depth = 1;
  std::vector<RunRow> rows;

  /// CSV header: epoch,loss,fro_W0..fro_WL,fro_Z,eff_rank,kl,raw_margin,
  /// norm_margin,balance_res,dist_to_ETF.
  std::string csv_header() const;
  std::string to_csv() const;
};

/// Computes every diagnostic for the current parameters.  `zero_tol_rel`
/// is the effective-rank cutoff relative to sigma_1.
RunRow diagnostics(const ModelParams& params, const ProblemSpec& spec, long epoch,
                   double zero_tol_rel = linalg::kDefaultRelativeZeroTol);

/// Thrown when the loss becomes non-finite (or keeps increasing) even after
/// the allowed number of step-size halvings.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(long epoch, const std::string& what)
      : std::runtime_error(what), epoch_(epoch) {}
  long epoch() const { return epoch_; }

 private:
  long epoch_;
};

struct TrainResult {
  ModelParams params;
  RunLog log;
  double final_step_size = 0.0;
  int halvings = 0;
  bool stopped_early = false;
};

/// Explicit Euler on the gradient flow (full-batch GD): phase 1 with
/// lambda_phase1, then phase 2 unregularized.  Every log window is checked for
/// a non-increasing objective; a violating window is replayed from its start
/// with half the step size.
TrainResult train(ModelParams params, const ProblemSpec& spec, const TrainSchedule& schedule,
                  double zero_tol_rel = linalg::kDefaultRelativeZeroTol);

}  // namespace ufm::model
