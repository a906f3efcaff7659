#include "ufmlab/geometry.hpp"

#include "ufmlab/csv.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace ufm::geometry {

using linalg::Vector;

model::ModelParams balanced_factors(const Matrix& z, const model::ProblemSpec& spec,
                                    std::uint64_t rotation_seed) {
  spec.validate();
  if (z.rows() != spec.K || z.cols() != spec.samples()) {
    throw std::invalid_argument("balanced_factors: Z must be K x nK");
  }
  const linalg::Svd svd = linalg::thin_svd(z);
  const double cutoff = linalg::kDefaultRelativeZeroTol * (svd.sigma.size() ? svd.sigma[0] : 0.0);
  int r = 0;
  while (r < svd.sigma.size() && svd.sigma[r] > cutoff) ++r;
  if (r == 0) throw std::domain_error("balanced_factors: zero matrix");

  const Vector s = svd.sigma.head(r).array().pow(1.0 / (spec.L + 1.0)).matrix();
  std::mt19937_64 rng(rotation_seed);
  std::vector<Matrix> frames;
  for (int l = 0; l < spec.L; ++l) frames.push_back(linalg::haar_orthogonal(spec.d, rng).leftCols(r));

  model::ModelParams params;
  params.factors.resize(spec.L + 1);
  params.factors[0] = frames[0] * s.asDiagonal() * svd.V.leftCols(r).transpose();
  for (int l = 1; l < spec.L; ++l) {
    params.factors[l] = frames[l] * s.asDiagonal() * frames[l - 1].transpose();
  }
  params.factors[spec.L] = svd.U.leftCols(r) * s.asDiagonal() * frames[spec.L - 1].transpose();
  return params;
}

namespace {

GeometryConstruction finish(std::string label, const model::ProblemSpec& spec, Matrix z,
                            double scale, double objective) {
  GeometryConstruction g;
  g.label = std::move(label);
  g.spec = spec;
  g.factors = balanced_factors(z, spec);
  g.logits = std::move(z);
  g.scale = scale;
  g.objective_value = objective;
  g.min_margin = model::margins(g.logits, spec).raw;
  return g;
}

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(what) + " must be > 0");
}

}  // namespace

double dnc_min_objective(int K, int n, int L) {
  return (L + 1.0) * (K - 1.0) * std::pow(static_cast<double>(n), 1.0 / (L + 1.0));
}

double cross_polytope_min_objective(int K, int n, int L) {
  const double unit = (L + 1.0) * std::pow(2.0 * std::sqrt(static_cast<double>(n)), 2.0 / (L + 1.0));
  if (K % 2 == 0) return unit * K / 2.0;
  return unit * ((K - 1) / 2.0 + std::pow(2.0, -2.0 / (L + 1.0)));
}

GeometryConstruction dnc_construction(const model::ProblemSpec& spec, std::optional<double> alpha) {
  spec.validate();
  const double root_n = std::sqrt(static_cast<double>(spec.n));
  const double a = alpha.value_or(std::pow(root_n, 1.0 / (spec.L + 1.0)));
  require_positive(a, "dnc_construction: alpha");
  const double c = std::pow(a, spec.L + 1.0) / root_n;
  Matrix z = c * linalg::kron_ones(linalg::simplex_etf(spec.K), spec.n);
  return finish("dnc", spec, std::move(z), a, (spec.L + 1.0) * (spec.K - 1.0) * a * a);
}

GeometryConstruction cross_polytope_construction(const model::ProblemSpec& spec,
                                                 std::optional<double> beta) {
  spec.validate();
  const double root_n = std::sqrt(static_cast<double>(spec.n));
  const double b = beta.value_or(std::pow(2.0 * root_n, 1.0 / (spec.L + 1.0)));
  require_positive(b, "cross_polytope_construction: beta");

  Matrix c = Matrix::Zero(spec.K, spec.K);
  for (int i = 0; i + 1 < spec.K; i += 2) {
    c(i, i) = c(i + 1, i + 1) = 1.0;
    c(i, i + 1) = c(i + 1, i) = -1.0;
  }
  const bool odd = spec.K % 2 == 1;
  if (odd) c(spec.K - 1, spec.K - 1) = 1.0;

  const double scale = std::pow(b, spec.L + 1.0) / (2.0 * root_n);
  Matrix z = scale * linalg::kron_ones(c, spec.n);
  double weight = (spec.K / 2) * 1.0;
  if (odd) weight += std::pow(2.0, -2.0 / (spec.L + 1.0));
  return finish(odd ? "cross_polytope_odd" : "cross_polytope", spec, std::move(z), b,
                (spec.L + 1.0) * weight * b * b);
}

GeometryConstruction kgon_code(int K, double mu, double phase, int n, int L, std::optional<int> d) {
  if (K <= 2) throw std::invalid_argument("kgon_code: K must be > 2");
  require_positive(mu, "kgon_code: mu");
  model::ProblemSpec spec{K, n, d.value_or(K), L};
  spec.validate();
  Matrix x(2, K);
  for (int i = 0; i < K; ++i) {
    const double theta = 2.0 * std::numbers::pi * i / K + phase;
    x(0, i) = mu * std::cos(theta);
    x(1, i) = mu * std::sin(theta);
  }
  Matrix z = linalg::kron_ones(x.transpose() * x, n);
  const double objective = max_margin_objective(z, L);
  return finish("kgon", spec, std::move(z), mu, objective);
}

double max_margin_objective(const Matrix& z, int L) {
  if (L < 1) throw std::invalid_argument("max_margin_objective: L must be >= 1");
  // Rounding-level singular values would otherwise count: s^{2/(L+1)} of
  // 1e-16 is not negligible once L >= 3.
  const linalg::SingularSpectrum s = linalg::singular_values(z);
  std::vector<double> kept;
  for (double v : s.values()) {
    if (v > linalg::kDefaultRelativeZeroTol * s.largest()) kept.push_back(v);
  }
  return (L + 1.0) * linalg::schatten_quasi(linalg::SingularSpectrum(kept), 2.0 / (L + 1.0));
}

double norm_propagation_ratio(int K, int L, int r) {
  if (r < 1 || r > K - 1) throw std::invalid_argument("norm_propagation_ratio: need 1 <= r <= K-1");
  return std::exp(-0.5 * L * std::log((K - 1.0) / r));
}

namespace {

void check_delta(int K, double delta) {
  if (K < 2) throw std::invalid_argument("K must be >= 2");
  if (!(delta > 0.0) || delta > 2.0 * std::numbers::pi / K * (1.0 + 1e-12)) {
    throw std::invalid_argument("delta must lie in (0, 2 pi / K]");
  }
}

bool two_cluster_branch(int K, double delta) {
  return K % 2 == 0 || delta <= 2.0 * std::numbers::pi / (K + 1);
}

// K - M for the two-cluster configuration, as a sum of nonnegative terms so
// that it stays accurate as delta -> 0.
double two_cluster_deficit(int K, double delta) {
  double deficit = 0.0;
  for (int size : {K / 2, K - K / 2}) {
    for (int j = 1; j <= size; ++j) {
      const double h = std::sin((2 * j - size - 1) * delta / 2.0);
      deficit += 2.0 * h * h;
    }
  }
  return deficit;
}

}  // namespace

double max_cos_sum(int K, double delta) {
  check_delta(K, delta);
  if (two_cluster_branch(K, delta)) {
    return (std::sin((K - K / 2) * delta) + std::sin((K / 2) * delta)) / std::sin(delta);
  }
  return std::abs(std::sin(K * delta)) / std::sin(delta);
}

double kgon_objective(double delta, int K) {
  check_delta(K, delta);
  const double half = std::sin(delta / 2.0);
  const double denom = 4.0 * std::pow(2.0 * half * half, 2);
  if (two_cluster_branch(K, delta)) {
    const double deficit = two_cluster_deficit(K, delta);
    return deficit * (2.0 * K - deficit) / denom;
  }
  const double m = max_cos_sum(K, delta);
  return (K * static_cast<double>(K) - m * m) / denom;
}

bool margin_feasible(const Matrix& z, const model::ProblemSpec& spec) {
  return model::margins(z, spec).raw >= 1.0 - 1e-9;
}

std::vector<double> gram_factor_angles(const Matrix& z, int n, const GramTolerances& tol) {
  if (n < 1 || z.cols() % n != 0 || z.cols() / n != z.rows()) {
    throw std::invalid_argument("gram_factor_angles: Z must be K x nK");
  }
  const int K = static_cast<int>(z.rows());
  Eigen::MatrixXd mean(K, K);
  for (int c = 0; c < K; ++c) mean.col(c) = z.middleCols(c * n, n).rowwise().mean();
  const Eigen::MatrixXd sym = 0.5 * (mean + mean.transpose());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  const Vector& lambda = eig.eigenvalues();  // ascending
  const double top = lambda[K - 1];
  if (!(top > 0.0)) throw std::domain_error("gram_factor_angles: no positive eigenvalue");
  if (lambda[0] < -tol.psd_ratio * top) throw std::domain_error("gram_factor_angles: not PSD");
  const Vector sigma = linalg::thin_svd(Matrix(mean)).sigma;
  if (K < 3 || sigma[2] > tol.rank_ratio * sigma[0]) {
    throw std::domain_error("gram_factor_angles: not rank 2");
  }

  std::vector<double> angles(K);
  for (int c = 0; c < K; ++c) {
    const double x = std::sqrt(std::max(lambda[K - 1], 0.0)) * eig.eigenvectors()(c, K - 1);
    const double y = std::sqrt(std::max(lambda[K - 2], 0.0)) * eig.eigenvectors()(c, K - 2);
    angles[c] = std::atan2(y, x);
  }
  std::sort(angles.begin(), angles.end());
  std::vector<double> gaps(K);
  for (int c = 0; c + 1 < K; ++c) gaps[c] = angles[c + 1] - angles[c];
  gaps[K - 1] = 2.0 * std::numbers::pi - (angles[K - 1] - angles[0]);
  for (double& g : gaps) g *= 180.0 / std::numbers::pi;
  std::sort(gaps.begin(), gaps.end());
  return gaps;
}

namespace {
int numerical_rank(const Matrix& z) {
  const linalg::SingularSpectrum s = linalg::singular_values(z);
  return static_cast<int>(std::count_if(s.values().begin(), s.values().end(),
                                        [&](double v) { return v > 1e-9 * s.largest(); }));
}
}  // namespace

nlohmann::json to_json(const GeometryConstruction& g) {
  return {{"label", g.label},
          {"K", g.spec.K},
          {"n", g.spec.n},
          {"d", g.spec.d},
          {"L", g.spec.L},
          {"scale", g.scale},
          {"objective", g.objective_value},
          {"min_margin", g.min_margin},
          {"rank", numerical_rank(g.logits)}};
}

std::string logits_csv(const Matrix& z) {
  std::string out;
  std::vector<double> row(z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    for (Eigen::Index j = 0; j < z.cols(); ++j) row[j] = z(i, j);
    out += csv::row(row) + "\n";
  }
  return out;
}

}  // namespace ufm::geometry
