#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace ufm::linalg {

// Dense storage is row-major throughout; every experiment is small enough
// (d <= ~1000, nK <= ~100) that no sparse path is needed.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Nonincreasing, nonnegative singular values.
class SingularSpectrum {
 public:
  SingularSpectrum() = default;
  /// Sorts descending; throws std::invalid_argument on negative or non-finite input.
  explicit SingularSpectrum(std::vector<double> values);

  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  double largest() const { return values_.empty() ? 0.0 : values_.front(); }

 private:
  std::vector<double> values_;
};

struct Svd {
  Matrix U;  // rows x r
  Vector sigma;
  Matrix V;  // cols x r
};

SingularSpectrum singular_values(const Matrix& m);
/// Thin SVD, singular values descending.
Svd thin_svd(const Matrix& m);

/// Sylvester-Hadamard matrix of order 2^m built by the block recursion.
Matrix sylvester_hadamard(int m);
/// Same matrix from the parity rule H_ij = (-1)^{popcount(i & j)}.
Matrix hadamard_by_parity(int m);
bool is_power_of_two(long k);
/// log2 of a power of two; throws std::invalid_argument otherwise.
int log2_exact(long k);

/// I_K - (1/K) 1 1^T.
Matrix simplex_etf(int K);

/// M (x) 1_n^T: every column of M repeated n times, contiguous, in order.
Matrix kron_ones(const Matrix& m, int n);

/// Default cutoff for "non-zero" singular values, relative to sigma_1.
inline constexpr double kDefaultRelativeZeroTol = 1e-12;

/// exp of the Shannon entropy of the normalized singular values above
/// `zero_tol` (absolute).  Throws std::domain_error if nothing survives.
double effective_rank(const SingularSpectrum& spectrum, double zero_tol);
/// Uses kDefaultRelativeZeroTol * sigma_1 as the cutoff.
double effective_rank(const SingularSpectrum& spectrum);

/// Sum of sigma_i^p over the nonzero singular values.
double schatten_quasi(const SingularSpectrum& spectrum, double p);

/// KL(uniform || a_hat) = -log(len) - mean(log a_hat_i); +inf when any entry
/// is zero.  `a_hat` must be a probability vector (sum 1 within 1e-9).
double kl_to_uniform(std::span<const double> a_hat);
double kl_to_uniform(const Vector& a_hat);

/// || A/||A||_F - B/||B||_F ||_F^2, in [0, 4].
double direction_distance(const Matrix& a, const Matrix& b);

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the sign
/// of diag(R) folded into Q.
Matrix haar_orthogonal(int d, std::mt19937_64& rng);

/// Orthogonal n x n matrix whose first column is 1_n / sqrt(n), completed by
/// a fixed Householder reflection (deterministic).
Matrix ones_completion(int n);

}  // namespace ufm::linalg
