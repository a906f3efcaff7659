#include "ufmlab/linalg.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace ufm::linalg;

namespace {

Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(rows.size(), rows.begin()->size());
  int i = 0;
  for (const auto& r : rows) {
    int j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

}  // namespace

TEST(Hadamard, SmallOrders) {
  EXPECT_EQ(sylvester_hadamard(0), from_rows({{1}}));
  EXPECT_EQ(sylvester_hadamard(1), from_rows({{1, 1}, {1, -1}}));
}

TEST(Hadamard, OrthogonalAndParityAgree) {
  const Matrix h = sylvester_hadamard(3);
  EXPECT_EQ(h * h.transpose(), 8.0 * Matrix::Identity(8, 8));
  EXPECT_EQ(h, hadamard_by_parity(3));
  EXPECT_TRUE((h.row(0).array() == 1.0).all());
  EXPECT_TRUE((h.col(0).array() == 1.0).all());
}

TEST(Hadamard, ColumnProductIsXor) {
  for (int m = 1; m <= 4; ++m) {
    const Matrix h = sylvester_hadamard(m);
    const int K = 1 << m;
    for (int i = 0; i < K; ++i) {
      for (int j = 0; j < K; ++j) {
        const Eigen::VectorXd prod = h.col(i).cwiseProduct(h.col(j));
        EXPECT_EQ(prod, Eigen::VectorXd(h.col(i ^ j))) << "m=" << m << " i=" << i << " j=" << j;
      }
    }
  }
}

TEST(Hadamard, RejectsBadOrders) {
  EXPECT_THROW(sylvester_hadamard(-1), std::invalid_argument);
  EXPECT_THROW(sylvester_hadamard(40), std::overflow_error);
  EXPECT_THROW(log2_exact(12), std::invalid_argument);
  EXPECT_EQ(log2_exact(16), 4);
}

TEST(SimplexEtf, Values) {
  EXPECT_TRUE(simplex_etf(2).isApprox(from_rows({{0.5, -0.5}, {-0.5, 0.5}})));
  for (int K = 2; K <= 7; ++K) {
    const Matrix s = simplex_etf(K);
    EXPECT_LT(s.rowwise().sum().cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_TRUE(s.isApprox(s.transpose()));
  }
  const SingularSpectrum sv = singular_values(simplex_etf(4));
  ASSERT_EQ(sv.size(), 4u);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(sv[i], 1.0, 1e-14);
  EXPECT_NEAR(sv[3], 0.0, 1e-14);
  EXPECT_THROW(simplex_etf(1), std::invalid_argument);
}

TEST(KronOnes, Repeats) {
  const Matrix m = from_rows({{1}, {2}});
  EXPECT_EQ(kron_ones(m, 1), m);
  EXPECT_EQ(kron_ones(m, 3), from_rows({{1, 1, 1}, {2, 2, 2}}));
  EXPECT_THROW(kron_ones(m, 0), std::invalid_argument);
}

TEST(KronOnes, SpectrumScalesByRootN) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  Matrix m(4, 4);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  const SingularSpectrum a = singular_values(m);
  const SingularSpectrum b = singular_values(kron_ones(m, 5));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(b[i], std::sqrt(5.0) * a[i], 1e-12);
}

TEST(SingularSpectrum, SortsAndValidates) {
  const SingularSpectrum s({1.0, 3.0, 2.0});
  EXPECT_EQ(s.values(), (std::vector<double>{3.0, 2.0, 1.0}));
  EXPECT_THROW(SingularSpectrum({1.0, -1.0}), std::invalid_argument);
  EXPECT_THROW(SingularSpectrum({std::nan("")}), std::invalid_argument);
}

TEST(Svd, ReconstructsAccurately) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  Matrix m(200, 120);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  const Svd svd = thin_svd(m);
  const Matrix back = svd.U * svd.sigma.asDiagonal() * svd.V.transpose();
  EXPECT_LT((back - m).norm() / m.norm(), 1e-12);
  for (Eigen::Index i = 1; i < svd.sigma.size(); ++i) EXPECT_GE(svd.sigma[i - 1], svd.sigma[i]);
}

TEST(EffectiveRank, Values) {
  EXPECT_NEAR(effective_rank(SingularSpectrum({2, 2, 2, 0, 0}), 1e-12), 3.0, 1e-12);
  EXPECT_NEAR(effective_rank(SingularSpectrum({5}), 1e-12), 1.0, 1e-15);
  // p = (1/2, 1/4, 1/4): entropy 1.5 log 2.
  EXPECT_NEAR(effective_rank(SingularSpectrum({2, 1, 1})), std::exp(1.5 * std::log(2.0)), 1e-12);
  EXPECT_NEAR(effective_rank(SingularSpectrum({2, 1, 1})), 2.0 * std::sqrt(2.0), 1e-12);
}

TEST(EffectiveRank, ScaleInvariantAndBounded) {
  const SingularSpectrum a({3.0, 1.0, 0.5, 0.25});
  const SingularSpectrum b({300.0, 100.0, 50.0, 25.0});
  EXPECT_NEAR(effective_rank(a), effective_rank(b), 1e-12);
  EXPECT_LE(effective_rank(a), 4.0);
  EXPECT_GE(effective_rank(a), 1.0);
  EXPECT_LE(effective_rank(a, 0.4), 3.0);
  EXPECT_THROW(effective_rank(SingularSpectrum({0.0, 0.0}), 1e-12), std::domain_error);
}

TEST(Schatten, Values) {
  for (double p : {0.5, 1.0, 2.0}) EXPECT_NEAR(schatten_quasi(SingularSpectrum({1, 1, 1, 1, 1}), p), 5.0, 1e-14);
  EXPECT_NEAR(schatten_quasi(SingularSpectrum({4}), 0.5), 2.0, 1e-15);
  EXPECT_THROW(schatten_quasi(SingularSpectrum({1}), 0.0), std::invalid_argument);
}

TEST(Schatten, EtfSpectrumAndFrobenius) {
  for (int K : {3, 5, 8}) {
    for (int n : {1, 4}) {
      for (int L : {1, 2, 4}) {
        const Matrix z = kron_ones(simplex_etf(K), n);
        SingularSpectrum s = singular_values(z);
        std::vector<double> nz;
        for (double v : s.values()) {
          if (v > 1e-10) nz.push_back(v);
        }
        const double got = schatten_quasi(SingularSpectrum(nz), 2.0 / (L + 1));
        EXPECT_NEAR(got, (K - 1) * std::pow(n, 1.0 / (L + 1)), 1e-10);
      }
    }
  }
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  Matrix m(5, 7);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  EXPECT_NEAR(schatten_quasi(singular_values(m), 2.0), m.squaredNorm(), 1e-10);
}

TEST(KlToUniform, Values) {
  EXPECT_NEAR(kl_to_uniform(Eigen::VectorXd::Constant(7, 1.0 / 7)), 0.0, 1e-15);
  EXPECT_EQ(kl_to_uniform(Eigen::Vector3d(0.5, 0.5, 0.0)), std::numeric_limits<double>::infinity());
  // -log 2 - (log 0.75 + log 0.25) / 2
  const double expect = -std::log(2.0) - 0.5 * (std::log(0.75) + std::log(0.25));
  EXPECT_NEAR(kl_to_uniform(Eigen::Vector2d(0.75, 0.25)), expect, 1e-15);
  EXPECT_NEAR(expect, 0.14384103622589045, 1e-15);
  EXPECT_THROW(kl_to_uniform(Eigen::Vector2d(1.5, -0.5)), std::invalid_argument);
  EXPECT_THROW(kl_to_uniform(Eigen::Vector2d(0.5, 0.4)), std::invalid_argument);
}

TEST(DirectionDistance, Values) {
  const Matrix b = from_rows({{1, 2}, {3, 4}});
  EXPECT_NEAR(direction_distance(2.5 * b, b), 0.0, 1e-15);
  EXPECT_NEAR(direction_distance(-b, b), 4.0, 1e-14);
  const Matrix e1 = from_rows({{1, 0}, {0, 0}});
  const Matrix e2 = from_rows({{0, 0}, {0, 3}});
  EXPECT_NEAR(direction_distance(e1, e2), 2.0, 1e-15);
  const Matrix a = from_rows({{0.3, -1}, {2, 0.1}});
  EXPECT_NEAR(direction_distance(a, b), direction_distance(7 * a, 0.1 * b), 1e-14);
  EXPECT_THROW(direction_distance(Matrix::Zero(2, 2), b), std::invalid_argument);
  EXPECT_THROW(direction_distance(Matrix::Ones(2, 3), b), std::invalid_argument);
}

TEST(Orthogonal, HaarAndOnesCompletion) {
  std::mt19937_64 rng(9);
  const Matrix q = haar_orthogonal(6, rng);
  EXPECT_LT((q.transpose() * q - Matrix::Identity(6, 6)).norm(), 1e-13);
  for (int n : {1, 2, 5}) {
    const Matrix c = ones_completion(n);
    EXPECT_LT((c.transpose() * c - Matrix::Identity(n, n)).norm(), 1e-13);
    EXPECT_LT((c.col(0) - Eigen::VectorXd::Constant(n, 1 / std::sqrt(double(n)))).norm(), 1e-14);
  }
}
