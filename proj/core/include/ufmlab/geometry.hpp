#pragma once

#include "ufmlab/linalg.hpp"
#include "ufmlab/model.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ufm::geometry {

using linalg::Matrix;

struct GeometryConstruction {
  std::string label;  // dnc | cross_polytope | cross_polytope_odd | kgon
  model::ProblemSpec spec;
  Matrix logits;               // K x nK
  model::ModelParams factors;  // balanced, product equals logits
  double scale = 0.0;          // alpha, beta or mu
  double objective_value = 0.0;
  double min_margin = 0.0;
};

/// Balanced depth-L factorization of Z built from its thin SVD: every factor
/// carries sigma^{1/(L+1)}, inner frames are seeded Haar rotations.
model::ModelParams balanced_factors(const Matrix& z, const model::ProblemSpec& spec,
                                    std::uint64_t rotation_seed = 0);

/// Z = alpha^{L+1}/sqrt(n) S (x) 1_n^T.  Default alpha is the smallest feasible
/// one, n^{1/(2(L+1))}.
GeometryConstruction dnc_construction(const model::ProblemSpec& spec,
                                      std::optional<double> alpha = std::nullopt);

/// Even K: Z = beta^{L+1}/(2 sqrt n) C (x) 1_n^T, C block-diagonal in
/// [[1,-1],[-1,1]].  Odd K: one extra 1x1 block [1].  Default beta is
/// minimal, (2 sqrt n)^{1/(L+1)}.
GeometryConstruction cross_polytope_construction(const model::ProblemSpec& spec,
                                                 std::optional<double> beta = std::nullopt);

/// Closed-form objectives at the minimal scale.
double dnc_min_objective(int K, int n, int L);
double cross_polytope_min_objective(int K, int n, int L);

/// Class means x_i = mu (cos(2 pi i/K + phase), sin(2 pi i/K + phase)),
/// Z = X^T X (x) 1_n^T.  Factors use depth L and width d (defaults 1 and K).
GeometryConstruction kgon_code(int K, double mu, double phase, int n, int L = 1,
                               std::optional<int> d = std::nullopt);

/// (L+1) sum sigma_i^{2/(L+1)}: the least total squared Frobenius norm over
/// depth-L factorizations of Z.
double max_margin_objective(const Matrix& z, int L);

/// ((K-1)/r)^{-L/2}: normalized-logit norm of DNC relative to a rank-r
/// equal-spectrum alternative.
double norm_propagation_ratio(int K, int L, int r);

/// Largest |sum_k cos 2 theta_k| over K angles with pairwise circular gaps
/// >= delta.  delta must lie in (0, 2 pi / K].
double max_cos_sum(int K, double delta);

/// Angular objective (K^2 - M^2) / (4 (1 - cos delta)^2), M = max_cos_sum.
double kgon_objective(double delta, int K);

/// min raw margin >= 1 - 1e-9.
bool margin_feasible(const Matrix& z, const model::ProblemSpec& spec);

struct GramTolerances {
  double rank_ratio = 1e-3;   // sigma_3 <= rank_ratio * sigma_1
  double psd_ratio = 1e-6;    // lambda_min >= -psd_ratio * lambda_max
};

/// Class-mean the columns of Z, factor the symmetric part as X^T X with X of
/// rank 2 and return the K circular gaps between adjacent columns of X,
/// sorted ascending, in degrees.  Throws std::domain_error when the class-mean
/// matrix is not rank 2 or not PSD within tolerance.
std::vector<double> gram_factor_angles(const Matrix& z, int n, const GramTolerances& tol = {});

nlohmann::json to_json(const GeometryConstruction& g);
/// Plain numeric CSV, one row per logit row, no header.
std::string logits_csv(const Matrix& z);

}  // namespace ufm::geometry
