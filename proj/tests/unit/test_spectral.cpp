#include "ufmlab/linalg.hpp"
#include "ufmlab/spectral.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace ufm;
using spectral::ReducedDynamics;
using spectral::SpectralState;
using spectral::Vector;

namespace {

// Psi_ij = 1 - (-1)^{popcount(i & j)} for i, j in 1..K-1.
Eigen::MatrixXi psi_by_parity(int K) {
  Eigen::MatrixXi p(K - 1, K - 1);
  for (int i = 1; i < K; ++i) {
    for (int j = 1; j < K; ++j) p(i - 1, j - 1) = (__builtin_popcount(i & j) % 2) ? 2 : 0;
  }
  return p;
}

// Direct sums, no matrix algebra.
Vector naive_rhs(const Vector& a, int K, int L) {
  const Eigen::MatrixXi psi = psi_by_parity(K);
  const int m = K - 1;
  std::vector<double> e(m);
  double D = 1.0;
  for (int j = 0; j < m; ++j) {
    double s = 0.0;
    for (int k = 0; k < m; ++k) s += psi(j, k) * a[k];
    e[j] = std::exp(-s);
    D += e[j];
  }
  Vector out(m);
  for (int i = 0; i < m; ++i) {
    double b = 0.0;
    for (int j = 0; j < m; ++j) b += psi(i, j) * e[j];
    out[i] = b * std::pow(a[i], 2.0 * L / (L + 1.0)) / D;
  }
  return out;
}

SpectralState state_of(Vector a, int K, int L) {
  SpectralState s;
  s.a = std::move(a);
  s.K = K;
  s.L = L;
  return s;
}

std::vector<double> log_times(double lo, double hi, int count) {
  std::vector<double> t(count);
  for (int i = 0; i < count; ++i) t[i] = lo * std::pow(hi / lo, double(i) / (count - 1));
  return t;
}

}  // namespace

TEST(Psi, SmallCases) {
  EXPECT_EQ(spectral::psi_matrix(2), Eigen::MatrixXi::Constant(1, 1, 2));
  Eigen::MatrixXi k4(3, 3);
  k4 << 2, 0, 2, 0, 2, 2, 2, 2, 0;
  EXPECT_EQ(spectral::psi_matrix(4), k4);
  EXPECT_THROW(spectral::psi_matrix(6), std::invalid_argument);
  EXPECT_THROW(spectral::psi_matrix(1), std::invalid_argument);
}

TEST(Psi, InvariantsAcrossOrders) {
  for (int K : {2, 4, 8, 16, 32}) {
    const Eigen::MatrixXi p = spectral::psi_matrix(K);
    EXPECT_EQ(p, psi_by_parity(K));
    EXPECT_TRUE(((p.array() == 0) || (p.array() == 2)).all());
    EXPECT_TRUE((p.rowwise().sum().array() == K).all());
    const Eigen::MatrixXi ones = Eigen::MatrixXi::Ones(K - 1, K - 1);
    EXPECT_EQ(p * p, K * (Eigen::MatrixXi::Identity(K - 1, K - 1) + ones));
  }
}

TEST(SpectralRhs, MatchesDirectSums) {
  std::mt19937_64 rng(1);
  for (int K : {2, 4, 8, 16}) {
    for (int L : {1, 2, 5}) {
      for (double scale : {1e-3, 1.0, 20.0}) {
        SpectralState s = spectral::random_state(K, L, scale, rng);
        const Vector got = spectral::spectral_rhs(s);
        const Vector want = naive_rhs(s.a, K, L);
        EXPECT_LE((got - want).cwiseAbs().maxCoeff(), 1e-13 * std::max(1.0, want.cwiseAbs().maxCoeff()));
      }
    }
  }
}

TEST(SpectralRhs, UniformClosedForm) {
  for (int K : {4, 16}) {
    for (int L : {1, 3}) {
      for (double mu : {0.01, 0.3, 2.0}) {
        const Vector r = spectral::spectral_rhs(state_of(Vector::Constant(K - 1, mu), K, L));
        const double e = std::exp(-K * mu);
        const double want = std::pow(mu, 2.0 * L / (L + 1)) * K * e / (1 + (K - 1) * e);
        for (int i = 0; i < K - 1; ++i) EXPECT_NEAR(r[i], want, 1e-14 * std::max(1.0, want));
      }
    }
  }
}

TEST(SpectralRhs, ScalarCase) {
  for (int L : {1, 2, 4}) {
    const double mu = 0.7;
    const double want = 2 * std::exp(-2 * mu) * std::pow(mu, 2.0 * L / (L + 1)) / (1 + std::exp(-2 * mu));
    EXPECT_NEAR(spectral::spectral_rhs(state_of(Vector::Constant(1, mu), 2, L))[0], want, 1e-15);
  }
}

TEST(SpectralRhs, SmallModeLimitAndBound) {
  std::mt19937_64 rng(2);
  const int K = 8, L = 2;
  SpectralState s = spectral::random_state(K, L, 1e-7, rng);
  const Vector r = spectral::spectral_rhs(s);
  const Vector lin = spectral::linearized_rhs(s);
  for (int i = 0; i < K - 1; ++i) {
    EXPECT_NEAR(r[i] / std::pow(s.a[i], 4.0 / 3.0), 1.0, 1e-5);
    EXPECT_NEAR(r[i] / lin[i], 1.0, 1e-5);
  }
  for (double scale : {0.1, 3.0, 30.0}) {
    s = spectral::random_state(K, L, scale, rng);
    const ReducedDynamics dyn(K, L);
    Vector b;
    double D = 0.0;
    dyn.coupling(s.a, b, D);
    const double emax = (-(dyn.psi() * s.a)).array().exp().maxCoeff();
    EXPECT_LE(b.maxCoeff(), K * emax * (1 + 1e-12));
    EXPECT_GE(b.minCoeff(), 0.0);
    EXPECT_TRUE(spectral::spectral_rhs(s).allFinite());
  }
}

TEST(SpectralRhs, EquivariantUnderLinearRelabelings) {
  // Modes are the nonzero elements of F_2^m; relabel them by every invertible
  // GF(2)-linear map, given by the images of the basis vectors.
  for (int m : {2, 3}) {
    const int K = 1 << m;
    Vector a(K - 1);
    for (int i = 0; i < K - 1; ++i) a[i] = 0.1 + 0.13 * i;
    int maps = 0;
    std::vector<int> cols(m, 1);
    while (true) {
      auto apply = [&](int x) {
        int y = 0;
        for (int b = 0; b < m; ++b) {
          if (x >> b & 1) y ^= cols[b];
        }
        return y;
      };
      std::vector<int> hit(K, 0);
      bool bijective = true;
      for (int x = 1; x < K; ++x) bijective &= apply(x) != 0 && !hit[apply(x)]++;
      if (bijective) {
        ++maps;
        Vector pa(K - 1);
        for (int i = 1; i < K; ++i) pa[apply(i) - 1] = a[i - 1];
        for (int L : {1, 3}) {
          const Vector r = spectral::spectral_rhs(state_of(a, K, L));
          const Vector pr = spectral::spectral_rhs(state_of(pa, K, L));
          for (int i = 1; i < K; ++i) EXPECT_NEAR(pr[apply(i) - 1], r[i - 1], 1e-15);
        }
      }
      int b = 0;
      while (b < m && cols[b] == K - 1) cols[b++] = 1;
      if (b == m) break;
      ++cols[b];
    }
    EXPECT_EQ(maps, m == 2 ? 6 : 168);
  }
  // Swapping modes 1 and 3 alone is not linear for K = 8 and breaks the symmetry.
  Vector a(7);
  for (int i = 0; i < 7; ++i) a[i] = 0.1 + 0.13 * i;
  Vector pa = a;
  std::swap(pa[0], pa[2]);
  Vector r = spectral::spectral_rhs(state_of(a, 8, 2));
  const Vector pr = spectral::spectral_rhs(state_of(pa, 8, 2));
  std::swap(r[0], r[2]);
  EXPECT_GT((pr - r).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(LinearizedRhs, FixedPointAndRatioDynamics) {
  EXPECT_NEAR(spectral::linearized_rhs(state_of(Vector::Constant(3, 1.0), 4, 2))[1], 0.0, 0.0);
  const Vector a = (Vector(3) << 0.02, 0.005, 0.01).finished();
  for (int L : {1, 2, 3}) {
    const Vector r = spectral::linearized_rhs(state_of(a, 4, L));
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        if (i == j) continue;
        const double ratio_rate = (r[i] * a[j] - a[i] * r[j]) / (a[j] * a[j]);
        const double gap = a[i] - a[j];
        if (L == 1) EXPECT_LT(ratio_rate * gap, 0.0) << i << "," << j;
        else EXPECT_GT(ratio_rate * gap, 0.0) << "L=" << L << " " << i << "," << j;
      }
    }
  }
}

TEST(Integrate, PositivityAndGrowingMass) {
  std::mt19937_64 rng(3);
  for (int L : {1, 2}) {
    const SpectralState s = spectral::random_state(8, L, 1e-3, rng);
    const auto rows = spectral::integrate(s, 1e3);
    ASSERT_GT(rows.size(), 10u);
    for (std::size_t i = 1; i < rows.size(); ++i) {
      EXPECT_GT(rows[i].t, rows[i - 1].t);
      EXPECT_GT(rows[i].l1, rows[i - 1].l1);
      EXPECT_GT(rows[i].a.minCoeff(), 0.0);
    }
    EXPECT_DOUBLE_EQ(rows.back().t, 1e3);
  }
}

TEST(Integrate, ScalarAgainstFineReference) {
  // K = 2, L = 1 reduces to a' = 2 e^{-2a} a / (1 + e^{-2a}); compare against
  // a fixed-step RK4 with a much smaller step.
  auto f = [](double a) { return 2 * std::exp(-2 * a) * a / (1 + std::exp(-2 * a)); };
  double a = 0.01;
  const double h = 1e-4;
  for (int i = 0; i < 50000; ++i) {
    const double k1 = f(a), k2 = f(a + h / 2 * k1), k3 = f(a + h / 2 * k2), k4 = f(a + h * k3);
    a += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  const auto rows = spectral::integrate(state_of(Vector::Constant(1, 0.01), 2, 1), 5.0);
  EXPECT_NEAR(rows.back().a[0] / a, 1.0, 1e-6);
}

TEST(Integrate, OutputTimesAndEarlyStop) {
  spectral::StepController c;
  c.output_times = {0.5, 1.0, 2.0};
  const auto rows = spectral::integrate(state_of(Vector::Constant(3, 0.1), 4, 2), 2.0, c);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[1].t, 0.5);
  EXPECT_EQ(rows[3].t, 2.0);

  spectral::StepController stop;
  stop.stop_l1 = 1.0;
  const auto early = spectral::integrate(state_of(Vector::Constant(3, 0.1), 4, 2), 1e6, stop);
  EXPECT_GE(early.back().l1, 1.0);
  EXPECT_LT(early.back().t, 1e6);

  EXPECT_THROW(spectral::integrate(state_of(Vector::Constant(3, 0.1), 4, 2), 0.0), std::invalid_argument);
  c.output_times = {2.0, 1.0};
  EXPECT_THROW(spectral::integrate(state_of(Vector::Constant(3, 0.1), 4, 2), 2.0, c), std::invalid_argument);
}

TEST(Integrate, ShallowFlowFlattensModes) {
  std::mt19937_64 rng(4);
  const SpectralState s = spectral::random_state(8, 1, 1e-3, rng);
  spectral::StepController c;
  c.output_times = log_times(1.0, 1e4, 40);
  const auto rows = spectral::integrate(s, 1e4, c);
  // Past the transient the divergence from uniform keeps shrinking.
  const std::size_t start = rows.size() / 2;
  for (std::size_t i = start + 1; i < rows.size(); ++i) EXPECT_LE(rows[i].kl, rows[i - 1].kl + 1e-12);
  EXPECT_LT(rows.back().kl, rows.front().kl);
}

TEST(Integrate, DeeperFlowConcentrates) {
  std::mt19937_64 rng(5);
  const SpectralState s = spectral::random_state(16, 2, 1e-3, rng);
  const auto rows = spectral::integrate(s, 1e3);
  EXPECT_GT(rows.back().kl, 5 * rows.front().kl);
  const int small = static_cast<int>((rows.back().a_hat.array() < 1e-3).count());
  EXPECT_GE(small, 5);
}

TEST(Integrate, MixedPatternPreserved) {
  const SpectralState s = spectral::mixed_init(16, 2, 0.2, 0.1);
  for (int i = 0; i < 15; ++i) EXPECT_EQ(s.a[i], i % 2 == 0 ? 0.2 : 0.1);
  const auto rows = spectral::integrate(s, 100.0);
  double prev_ratio = 2.0;
  for (const auto& r : rows) {
    for (int i = 2; i < 15; ++i) EXPECT_NEAR(r.a[i], r.a[i % 2], 1e-8 * r.a[i % 2]);
    const double ratio = r.a[0] / r.a[1];
    EXPECT_GE(ratio, prev_ratio - 1e-12);
    prev_ratio = ratio;
  }
  EXPECT_GT(prev_ratio, 2.0);
  const SpectralState same = spectral::mixed_init(8, 2, 0.3, 0.3);
  EXPECT_EQ(same.a, Vector::Constant(7, 0.3));
  EXPECT_THROW(spectral::mixed_init(8, 2, 0.0, 0.1), std::invalid_argument);
}

TEST(Trajectory, RowAndCsv) {
  const auto row = spectral::make_row(1.5, (Vector(3) << 0.5, 0.25, 0.25).finished());
  EXPECT_DOUBLE_EQ(row.l1, 1.0);
  // Divergence of the uniform distribution from a_hat.
  EXPECT_NEAR(row.kl, -std::log(3.0) - (std::log(0.5) + 2 * std::log(0.25)) / 3, 1e-15);
  EXPECT_NEAR(row.eff_rank, 2.0 * std::sqrt(2.0), 1e-12);
  const std::string csv = spectral::trajectory_csv({row}, 4);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "t,a_1,a_2,a_3,l1_norm,kl,eff_rank");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
}

TEST(Thresholds, Values) {
  EXPECT_EQ(spectral::dnc_stability_threshold(8, 1), 0.0);
  EXPECT_DOUBLE_EQ(spectral::dnc_stability_threshold(8, 3), 3.5);
  EXPECT_THROW(spectral::dnc_stability_threshold(5, 3), std::invalid_argument);
  for (int L = 1; L < 8; ++L) {
    EXPECT_LE(spectral::dnc_stability_threshold(16, L), spectral::dnc_stability_threshold(16, L + 1));
  }
  EXPECT_NEAR(spectral::kl_divergence_threshold(16, 2), std::pow(8.0 / 7.0, 3), 1e-14);
  EXPECT_NEAR(spectral::kl_divergence_threshold(16, 2), 1.49271, 1e-5);
  EXPECT_THROW(spectral::kl_divergence_threshold(16, 1), std::domain_error);
  for (int K = 4; K < 1024; K *= 2) {
    EXPECT_GT(spectral::kl_divergence_threshold(K, 3), spectral::kl_divergence_threshold(2 * K, 3));
  }
  EXPECT_NEAR(spectral::kl_divergence_threshold(1 << 20, 2), 1.0, 1e-5);
}

TEST(Probe, UniformDirectionAroundThreshold) {
  std::mt19937_64 rng(6);
  const int K = 8, L = 2;
  const double thr = spectral::dnc_stability_threshold(K, L);
  int above = 0, below = 0;
  for (int i = 0; i < 40; ++i) {
    above += spectral::stability_probe(spectral::uniform_direction(K), 2 * thr, K, L, 1e-4 * thr, rng).sign < 0;
    below += spectral::stability_probe(spectral::uniform_direction(K), 0.5 * thr, K, L, 1e-4 * thr, rng).sign > 0;
  }
  EXPECT_GE(above, 38);
  EXPECT_GE(below, 38);
  Vector bad = spectral::uniform_direction(K);
  bad[0] = -bad[0];
  EXPECT_THROW(spectral::stability_probe(bad, 1.0, K, L, 1e-4, rng), std::invalid_argument);
}

TEST(Probe, CrossPolytopeStableAtLargeScale) {
  std::mt19937_64 rng(7);
  const int K = 8, L = 2;
  const Vector c = spectral::cross_polytope_direction(K);
  EXPECT_NEAR(c.sum(), 1.0, 1e-15);
  EXPECT_EQ(c[1], 0.0);
  for (int i = 0; i < 20; ++i) EXPECT_LT(spectral::stability_probe(c, 20.0, K, L, 1e-3, rng).sign, 0);
}

TEST(MinRank, SupportCriteria) {
  EXPECT_TRUE(spectral::support_spans(8, {1, 2, 4}));
  EXPECT_FALSE(spectral::support_spans(8, {1, 2, 3}));
  EXPECT_GT(spectral::support_margin_lp(8, {1, 2, 4}), 1e-9);
  EXPECT_LE(spectral::support_margin_lp(8, {1, 2, 3}), 1e-9);
  EXPECT_GT(spectral::support_margin_lp(8, {3, 5, 6, 7}), 1e-9);
}

TEST(MinRank, IsLog2K) {
  const auto r4 = spectral::min_feasible_rank(4);
  EXPECT_EQ(r4.rank, 2);
  const auto r8 = spectral::min_feasible_rank(8);
  EXPECT_EQ(r8.rank, 3);
  EXPECT_EQ(r8.witness, (std::vector<int>{1, 2, 4}));
  EXPECT_EQ(spectral::min_feasible_rank(16).rank, 4);
  EXPECT_THROW(spectral::min_feasible_rank(128), std::invalid_argument);
}

TEST(ScaleMap, Values) {
  const auto m1 = spectral::scale_map({2, 1, 2, 1});
  EXPECT_DOUBLE_EQ(m1.a_scale, 0.5);
  EXPECT_DOUBLE_EQ(m1.t_scale, 2.0);
  const auto m2 = spectral::scale_map({4, 1, 4, 3});
  EXPECT_DOUBLE_EQ(m2.a_scale, 0.25);
  EXPECT_NEAR(m2.t_scale, 8.0, 1e-14);
  const auto m3 = spectral::scale_map({4, 4, 4, 2});
  EXPECT_DOUBLE_EQ(m3.a_scale, 1.0 / 8.0);
  EXPECT_NE(m3.a_scale, 1.0);
  EXPECT_THROW(spectral::scale_map({1, 1, 2, 1}), std::invalid_argument);
}
