#include "ufmlab/linalg.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace ufm::linalg {

SingularSpectrum::SingularSpectrum(std::vector<double> values) : values_(std::move(values)) {
  for (double v : values_) {
    if (!std::isfinite(v) || v < 0.0) {
      throw std::invalid_argument("singular values must be finite and nonnegative");
    }
  }
  std::sort(values_.begin(), values_.end(), std::greater<>());
}

SingularSpectrum singular_values(const Matrix& m) {
  if (m.size() == 0) return SingularSpectrum{};
  Eigen::JacobiSVD<Matrix> svd(m);
  const Vector& s = svd.singularValues();
  // Round-off can leave -0.0 or tiny negatives after the sign fix-ups.
  std::vector<double> v(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) v[i] = std::max(0.0, s[i]);
  return SingularSpectrum(std::move(v));
}

Svd thin_svd(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return Svd{svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

namespace {

void check_hadamard_order(int m) {
  if (m < 0) throw std::invalid_argument("Hadamard order exponent must be >= 0");
  // 4^m entries of 8 bytes must be addressable.
  constexpr int kMaxExponent = (std::numeric_limits<std::size_t>::digits - 4) / 2;
  if (m > kMaxExponent) {
    throw std::overflow_error("Hadamard matrix of order 2^" + std::to_string(m) +
                              " is not addressable");
  }
}

}  // namespace

Matrix sylvester_hadamard(int m) {
  check_hadamard_order(m);
  Matrix h(1, 1);
  h(0, 0) = 1.0;
  for (int level = 0; level < m; ++level) {
    const Eigen::Index k = h.rows();
    Matrix next(2 * k, 2 * k);
    next.topLeftCorner(k, k) = h;
    next.topRightCorner(k, k) = h;
    next.bottomLeftCorner(k, k) = h;
    next.bottomRightCorner(k, k) = -h;
    h = std::move(next);
  }
  return h;
}

Matrix hadamard_by_parity(int m) {
  check_hadamard_order(m);
  const std::size_t k = std::size_t{1} << m;
  Matrix h(k, k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      h(i, j) = (std::popcount(i & j) % 2 == 0) ? 1.0 : -1.0;
    }
  }
  return h;
}

bool is_power_of_two(long k) { return k > 0 && std::has_single_bit(static_cast<unsigned long>(k)); }

int log2_exact(long k) {
  if (!is_power_of_two(k)) {
    throw std::invalid_argument("K = " + std::to_string(k) + " is not a power of two");
  }
  return std::countr_zero(static_cast<unsigned long>(k));
}

Matrix simplex_etf(int K) {
  if (K < 2) throw std::invalid_argument("simplex ETF needs K >= 2");
  Matrix s = Matrix::Constant(K, K, -1.0 / K);
  s.diagonal().array() += 1.0;
  return s;
}

Matrix kron_ones(const Matrix& m, int n) {
  if (n < 1) throw std::invalid_argument("kron_ones needs n >= 1");
  Matrix out(m.rows(), m.cols() * n);
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (int j = 0; j < n; ++j) out.col(c * n + j) = m.col(c);
  }
  return out;
}

double effective_rank(const SingularSpectrum& spectrum, double zero_tol) {
  double total = 0.0;
  for (double s : spectrum.values()) {
    if (s > zero_tol) total += s;
  }
  if (total <= 0.0) throw std::domain_error("effective rank of an all-zero spectrum");
  double entropy = 0.0;
  for (double s : spectrum.values()) {
    if (s <= zero_tol) continue;
    const double p = s / total;
    entropy -= p * std::log(p);
  }
  return std::exp(entropy);
}

double effective_rank(const SingularSpectrum& spectrum) {
  return effective_rank(spectrum, kDefaultRelativeZeroTol * spectrum.largest());
}

double schatten_quasi(const SingularSpectrum& spectrum, double p) {
  if (!(p > 0.0)) throw std::invalid_argument("Schatten exponent must be > 0");
  double sum = 0.0;
  for (double s : spectrum.values()) {
    if (s > 0.0) sum += std::pow(s, p);
  }
  return sum;
}

double kl_to_uniform(std::span<const double> a_hat) {
  if (a_hat.empty()) throw std::invalid_argument("KL of an empty vector");
  double sum = 0.0;
  bool has_zero = false;
  for (double v : a_hat) {
    if (v < 0.0) throw std::invalid_argument("KL: negative entry");
    if (v == 0.0) has_zero = true;
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("KL: entries must sum to 1");
  if (has_zero) return std::numeric_limits<double>::infinity();
  const double count = static_cast<double>(a_hat.size());
  double log_sum = 0.0;
  for (double v : a_hat) log_sum += std::log(v);
  return -std::log(count) - log_sum / count;
}

double kl_to_uniform(const Vector& a_hat) {
  return kl_to_uniform(std::span<const double>(a_hat.data(), static_cast<std::size_t>(a_hat.size())));
}

double direction_distance(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument("direction_distance: shape mismatch");
  }
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw std::invalid_argument("direction_distance: zero matrix");
  return (a / na - b / nb).squaredNorm();
}

Matrix haar_orthogonal(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd g(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) g(i, j) = normal(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd& r = qr.matrixQR();
  for (int j = 0; j < d; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  return q;
}

Matrix ones_completion(int n) {
  if (n < 1) throw std::invalid_argument("ones_completion needs n >= 1");
  // Householder reflection I - 2 v v^T / v^T v with v = e_1 - 1/sqrt(n) maps e_1
  // to the normalized ones vector.
  Vector v = Vector::Constant(n, -1.0 / std::sqrt(static_cast<double>(n)));
  v[0] += 1.0;
  Matrix q = Matrix::Identity(n, n);
  const double vv = v.squaredNorm();
  if (vv > 0.0) q -= (2.0 / vv) * v * v.transpose();
  return q;
}

}  // namespace ufm::linalg
