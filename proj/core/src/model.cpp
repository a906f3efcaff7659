#include "ufmlab/model.hpp"

#include "ufmlab/csv.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace ufm::model {

using linalg::Vector;

void ProblemSpec::validate() const {
  if (K < 2) throw std::invalid_argument("ProblemSpec: K must be >= 2");
  if (n < 1) throw std::invalid_argument("ProblemSpec: n must be >= 1");
  if (L < 1) throw std::invalid_argument("ProblemSpec: L must be >= 1");
  if (d < K) throw std::invalid_argument("ProblemSpec: width d must be >= K");
}

void ModelParams::validate(const ProblemSpec& spec) const {
  if (depth() != spec.L) throw std::invalid_argument("ModelParams: depth does not match spec");
  for (int l = 0; l <= spec.L; ++l) {
    const Matrix& w = factors[l];
    const Eigen::Index rows = (l == spec.L) ? spec.K : spec.d;
    const Eigen::Index cols = (l == 0) ? spec.samples() : spec.d;
    if (w.rows() != rows || w.cols() != cols) {
      throw std::invalid_argument("ModelParams: factor " + std::to_string(l) + " has shape " +
                                  std::to_string(w.rows()) + "x" + std::to_string(w.cols()));
    }
    if (!w.allFinite()) {
      throw std::invalid_argument("ModelParams: factor " + std::to_string(l) + " is not finite");
    }
  }
}

Matrix logits(const ModelParams& params) {
  Matrix z = params.factors.front();
  for (std::size_t l = 1; l < params.factors.size(); ++l) z = params.factors[l] * z;
  return z;
}

Matrix one_hot_targets(const ProblemSpec& spec) {
  return linalg::kron_ones(Matrix::Identity(spec.K, spec.K), spec.n);
}

Matrix softmax_matrix(const Matrix& z) {
  Matrix p(z.rows(), z.cols());
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const double shift = z.col(j).maxCoeff();
    p.col(j) = (z.col(j).array() - shift).exp();
    p.col(j) /= p.col(j).sum();
  }
  return p;
}

double ce_loss_of_logits(const Matrix& z, int n) {
  double loss = 0.0;
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const Eigen::Index cls = j / n;
    const double shift = z.col(j).maxCoeff();
    const double lse = shift + std::log((z.col(j).array() - shift).exp().sum());
    loss += lse - z(cls, j);
  }
  return loss;
}

double ce_loss(const ModelParams& params, const ProblemSpec& spec) {
  return ce_loss_of_logits(logits(params), spec.n);
}

namespace {

// Forward activations plus softmax residual, reused by the trainer so each
// Euler step costs one forward and one backward sweep.
struct Workspace {
  std::vector<Matrix> acts;  // acts[l] = W_l ... W_0; acts[L] = Z
  Matrix residual;           // Y - P
  Matrix back;
  double loss = 0.0;

  void forward(const ModelParams& params, int n) {
    const auto count = params.factors.size();
    acts.resize(count);
    acts[0] = params.factors[0];
    for (std::size_t l = 1; l < count; ++l) acts[l].noalias() = params.factors[l] * acts[l - 1];
    const Matrix& z = acts.back();
    residual.resize(z.rows(), z.cols());
    loss = 0.0;
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
      const Eigen::Index cls = j / n;
      const double shift = z.col(j).maxCoeff();
      residual.col(j) = (z.col(j).array() - shift).exp();
      const double total = residual.col(j).sum();
      loss += shift + std::log(total) - z(cls, j);
      residual.col(j) /= -total;
      residual(cls, j) += 1.0;
    }
  }

  // grads[l] = A_{l+1}^T (Y - P) H_l^T - 2 lambda W_l.
  void backward(const ModelParams& params, double lambda, GradientBundle& grads) {
    const int depth = params.depth();
    grads.resize(params.factors.size());
    back = residual;
    for (int l = depth; l >= 1; --l) {
      grads[l].noalias() = back * acts[l - 1].transpose();
      Matrix next = params.factors[l].transpose() * back;
      back = std::move(next);
    }
    grads[0] = back;
    if (lambda != 0.0) {
      for (std::size_t l = 0; l < grads.size(); ++l) grads[l] -= (2.0 * lambda) * params.factors[l];
    }
  }
};

}  // namespace

GradientBundle flow_rhs(const ModelParams& params, const ProblemSpec& spec, double lambda) {
  params.validate(spec);
  Workspace ws;
  ws.forward(params, spec.n);
  GradientBundle grads;
  ws.backward(params, lambda, grads);
  return grads;
}

Matrix logit_velocity(const ModelParams& params, const ProblemSpec& spec) {
  params.validate(spec);
  Workspace ws;
  ws.forward(params, spec.n);
  const int depth = params.depth();
  const Matrix& g = ws.residual;

  // A_{l+1} for l = depth..0, built by right-multiplying down the stack.
  std::vector<Matrix> a(depth + 2);
  a[depth + 1] = Matrix::Identity(spec.K, spec.K);
  for (int l = depth; l >= 1; --l) a[l] = a[l + 1] * params.factors[l];

  Matrix velocity = Matrix::Zero(g.rows(), g.cols());
  for (int l = 0; l <= depth; ++l) {
    Matrix left = (l == depth) ? g : Matrix(a[l + 1] * a[l + 1].transpose() * g);
    if (l == 0) {
      velocity += left;
    } else {
      const Matrix& h = ws.acts[l - 1];  // H_l
      velocity.noalias() += (left * h.transpose()) * h;
    }
  }
  return velocity;
}

ModelParams random_init(const ProblemSpec& spec, double eps, std::uint64_t seed) {
  spec.validate();
  if (!(eps > 0.0)) throw std::invalid_argument("random_init: eps must be > 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, eps / std::sqrt(static_cast<double>(spec.d)));
  ModelParams params;
  params.factors.reserve(spec.L + 1);
  for (int l = 0; l <= spec.L; ++l) {
    const int rows = (l == spec.L) ? spec.K : spec.d;
    const int cols = (l == 0) ? spec.samples() : spec.d;
    Matrix w(rows, cols);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) w(i, j) = normal(rng);
    }
    params.factors.push_back(std::move(w));
  }
  return params;
}

HadamardFrame hadamard_init_with_frame(const ProblemSpec& spec, const std::vector<double>& alpha,
                                       std::uint64_t rotation_seed) {
  spec.validate();
  const int m = linalg::log2_exact(spec.K);
  if (static_cast<int>(alpha.size()) != spec.K) {
    throw std::invalid_argument("hadamard_init: alpha must have K entries");
  }
  for (double v : alpha) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument("hadamard_init: alpha must be finite and nonnegative");
    }
  }

  HadamardFrame frame;
  frame.U = linalg::sylvester_hadamard(m) / std::sqrt(static_cast<double>(spec.K));
  const Vector q1 = linalg::ones_completion(spec.n).col(0);
  frame.V_K.resize(spec.samples(), spec.K);
  for (int i = 0; i < spec.K; ++i) {
    for (int c = 0; c < spec.K; ++c) frame.V_K.block(c * spec.n, i, spec.n, 1) = frame.U(c, i) * q1;
  }

  std::mt19937_64 rng(rotation_seed);
  frame.rotations.reserve(spec.L);
  for (int l = 0; l < spec.L; ++l) frame.rotations.push_back(linalg::haar_orthogonal(spec.d, rng));

  const Vector diag = Eigen::Map<const Vector>(alpha.data(), spec.K);
  auto leading = [&](const Matrix& r) { return Matrix(r.leftCols(spec.K)); };

  ModelParams& params = frame.params;
  params.factors.resize(spec.L + 1);
  params.factors[0] = leading(frame.rotations[0]) * diag.asDiagonal() * frame.V_K.transpose();
  for (int l = 1; l < spec.L; ++l) {
    params.factors[l] =
        leading(frame.rotations[l]) * diag.asDiagonal() * leading(frame.rotations[l - 1]).transpose();
  }
  params.factors[spec.L] =
      frame.U * diag.asDiagonal() * leading(frame.rotations[spec.L - 1]).transpose();
  return frame;
}

ModelParams hadamard_init(const ProblemSpec& spec, const std::vector<double>& alpha,
                          std::uint64_t rotation_seed) {
  return hadamard_init_with_frame(spec, alpha, rotation_seed).params;
}

double parameter_norm_squared(const ModelParams& params) {
  double total = 0.0;
  for (const Matrix& w : params.factors) total += w.squaredNorm();
  return total;
}

double balancedness_residual(const ModelParams& params) {
  double worst = 0.0;
  for (std::size_t l = 1; l < params.factors.size(); ++l) {
    const double upper_norm = params.factors[l].norm();
    const double lower_norm = params.factors[l - 1].norm();
    if (upper_norm == 0.0 || lower_norm == 0.0) {
      throw std::domain_error("balancedness_residual: zero-norm factor");
    }
    const Matrix upper = params.factors[l] / upper_norm;
    const Matrix lower = params.factors[l - 1] / lower_norm;
    const double r = (upper.transpose() * upper - lower * lower.transpose()).norm();
    worst = std::max(worst, r);
  }
  return worst;
}

Margins margins(const Matrix& z, const ProblemSpec& spec) {
  if (z.rows() != spec.K || z.cols() != spec.samples()) {
    throw std::invalid_argument("margins: Z must be K x nK");
  }
  double worst = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const Eigen::Index cls = j / spec.n;
    for (Eigen::Index c = 0; c < z.rows(); ++c) {
      if (c != cls) worst = std::min(worst, z(cls, j) - z(c, j));
    }
  }
  const double norm = z.norm();
  return Margins{worst, norm > 0.0 ? worst / norm : 0.0};
}

void TrainSchedule::validate() const {
  if (!(step_size > 0.0)) throw std::invalid_argument("TrainSchedule: step_size must be > 0");
  if (epochs_phase1 < 0 || epochs_phase2 < 0) {
    throw std::invalid_argument("TrainSchedule: epoch counts must be >= 0");
  }
  if (lambda_phase1 < 0.0) throw std::invalid_argument("TrainSchedule: lambda must be >= 0");
  if (log_every < 1) throw std::invalid_argument("TrainSchedule: log_every must be >= 1");
}

std::string RunLog::csv_header() const {
  std::string h = "epoch,loss";
  for (int l = 0; l <= depth; ++l) h += ",fro_W" + std::to_string(l);
  h += ",fro_Z,eff_rank,kl,raw_margin,norm_margin,balance_res,dist_to_ETF";
  return h;
}

std::string RunLog::to_csv() const {
  std::string out = csv_header() + "\n";
  for (const RunRow& r : rows) {
    out += std::to_string(r.epoch);
    std::vector<double> values{r.loss};
    values.insert(values.end(), r.factor_norms.begin(), r.factor_norms.end());
    values.insert(values.end(), {r.logit_norm, r.eff_rank, r.kl, r.raw_margin, r.norm_margin,
                                 r.balance_residual, r.dist_to_etf});
    out += "," + csv::row(values) + "\n";
  }
  return out;
}

RunRow diagnostics(const ModelParams& params, const ProblemSpec& spec, long epoch,
                   double zero_tol_rel) {
  constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
  RunRow row;
  row.epoch = epoch;
  const Matrix z = logits(params);
  row.loss = ce_loss_of_logits(z, spec.n);
  for (const Matrix& w : params.factors) row.factor_norms.push_back(w.norm());
  row.logit_norm = z.norm();

  const linalg::SingularSpectrum spectrum = linalg::singular_values(z);
  if (spectrum.largest() > 0.0) {
    row.eff_rank = linalg::effective_rank(spectrum, zero_tol_rel * spectrum.largest());
    // KL over the K-1 leading logit directions (the centered modes).
    const std::size_t modes = std::min<std::size_t>(spec.K - 1, spectrum.size());
    Vector a_hat(modes);
    for (std::size_t i = 0; i < modes; ++i) a_hat[i] = spectrum[i];
    a_hat /= a_hat.sum();
    row.kl = linalg::kl_to_uniform(a_hat);
    row.dist_to_etf =
        linalg::direction_distance(z, linalg::kron_ones(linalg::simplex_etf(spec.K), spec.n));
  } else {
    row.eff_rank = 0.0;
    row.kl = std::numeric_limits<double>::infinity();
    row.dist_to_etf = kNaN;
  }
  const Margins m = margins(z, spec);
  row.raw_margin = m.raw;
  row.norm_margin = m.normalized;
  try {
    row.balance_residual = balancedness_residual(params);
  } catch (const std::domain_error&) {
    row.balance_residual = kNaN;
  }
  return row;
}

TrainResult train(ModelParams params, const ProblemSpec& spec, const TrainSchedule& schedule,
                  double zero_tol_rel) {
  spec.validate();
  schedule.validate();
  params.validate(spec);

  TrainResult result;
  result.log.depth = spec.L;
  result.final_step_size = schedule.step_size;

  Workspace ws;
  GradientBundle grads;
  double step = schedule.step_size;
  long epoch = 0;
  const auto stop_reached = [&](double loss) {
    return schedule.stop_loss.has_value() && loss < *schedule.stop_loss;
  };

  ws.forward(params, spec.n);
  result.log.rows.push_back(diagnostics(params, spec, 0, zero_tol_rel));
  bool stopped = stop_reached(ws.loss);

  const struct {
    long epochs;
    double lambda;
  } phases[] = {{schedule.epochs_phase1, schedule.lambda_phase1}, {schedule.epochs_phase2, 0.0}};

  for (const auto& phase : phases) {
    long done = 0;
    while (!stopped && done < phase.epochs) {
      const long window = std::min(schedule.log_every, phase.epochs - done);
      const ModelParams snapshot = params;
      ws.forward(params, spec.n);
      const double start_objective = ws.loss + phase.lambda * parameter_norm_squared(params);

      long taken = 0;
      bool finite = true;
      bool hit_stop = false;
      for (; taken < window; ++taken) {
        ws.backward(params, phase.lambda, grads);
        for (std::size_t l = 0; l < grads.size(); ++l) params.factors[l] += step * grads[l];
        ws.forward(params, spec.n);
        if (!std::isfinite(ws.loss)) {
          finite = false;
          break;
        }
        if (stop_reached(ws.loss)) {
          hit_stop = true;
          ++taken;
          break;
        }
      }

      const double end_objective =
          finite ? ws.loss + phase.lambda * parameter_norm_squared(params)
                 : std::numeric_limits<double>::infinity();
      // Relative slack absorbs round-off once the loss has flattened out.
      const bool increased =
          !(end_objective <= start_objective + 1e-12 * std::max(1.0, std::abs(start_objective)));
      if (increased) {
        params = snapshot;
        step *= 0.5;
        ++result.halvings;
        if (result.halvings > schedule.max_halvings) {
          throw DivergenceError(epoch + taken,
                                "training diverged at epoch " + std::to_string(epoch + taken) +
                                    " after " + std::to_string(schedule.max_halvings) +
                                    " step-size halvings");
        }
        continue;
      }

      epoch += taken;
      done += taken;
      result.log.rows.push_back(diagnostics(params, spec, epoch, zero_tol_rel));
      if (hit_stop) stopped = true;
    }
  }

  result.stopped_early = stopped;
  result.final_step_size = step;
  result.params = std::move(params);
  return result;
}

}  // namespace ufm::model
