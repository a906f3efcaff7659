#include "ufmlab/spectral.hpp"

#include "ufmlab/csv.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>

namespace ufm::spectral {

namespace {

void require_power_of_two(int K, int min_exponent) {
  const int m = linalg::log2_exact(K);
  if (m < min_exponent) {
    throw std::invalid_argument("K = " + std::to_string(K) + " is too small here (need K >= " +
                                std::to_string(1 << min_exponent) + ")");
  }
}

}  // namespace

PsiMatrix psi_matrix(int K) {
  require_power_of_two(K, 1);
  const linalg::Matrix phi = linalg::sylvester_hadamard(linalg::log2_exact(K));
  PsiMatrix psi(K - 1, K - 1);
  for (int i = 1; i < K; ++i) {
    for (int j = 1; j < K; ++j) psi(i - 1, j - 1) = 1 - static_cast<int>(phi(i, j));
  }
  return psi;
}

void SpectralState::validate() const {
  require_power_of_two(K, 1);
  if (L < 1) throw std::invalid_argument("SpectralState: L must be >= 1");
  if (a.size() != K - 1) throw std::invalid_argument("SpectralState: need K-1 modes");
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (!(a[i] > 0.0) || !std::isfinite(a[i])) {
      throw std::invalid_argument("SpectralState: modes must be finite and positive");
    }
  }
}

ReducedDynamics::ReducedDynamics(int K, int L)
    : K_(K), L_(L), exponent_(2.0 * L / (L + 1.0)), psi_(psi_matrix(K).cast<double>()) {
  if (L < 1) throw std::invalid_argument("ReducedDynamics: L must be >= 1");
}

void ReducedDynamics::coupling(const Vector& a, Vector& b, double& D) const {
  const Vector e = (-(psi_ * a)).array().exp();
  b = psi_ * e;
  D = 1.0 + e.sum();
}

Vector ReducedDynamics::rhs(const Vector& a) const {
  Vector b;
  double D = 0.0;
  coupling(a, b, D);
  return (b.array() * a.array().pow(exponent_) / D).matrix();
}

Vector ReducedDynamics::linearized_rhs(const Vector& a) const {
  return (a.array().pow(exponent_) * (1.0 - a.array())).matrix();
}

Vector spectral_rhs(const SpectralState& state) {
  state.validate();
  return ReducedDynamics(state.K, state.L).rhs(state.a);
}

Vector linearized_rhs(const SpectralState& state) {
  return ReducedDynamics(state.K, state.L).linearized_rhs(state.a);
}

TrajectoryRow make_row(double t, const Vector& a) {
  TrajectoryRow row;
  row.t = t;
  row.a = a;
  row.l1 = a.sum();
  row.a_hat = a / row.l1;
  row.kl = linalg::kl_to_uniform(row.a_hat);
  row.eff_rank = linalg::effective_rank(
      linalg::SingularSpectrum(std::vector<double>(row.a_hat.begin(), row.a_hat.end())));
  return row;
}

std::vector<TrajectoryRow> integrate(const SpectralState& state, double t_end,
                                     const StepController& controller) {
  state.validate();
  if (!(t_end > 0.0)) throw std::invalid_argument("integrate: t_end must be > 0");
  if (!std::is_sorted(controller.output_times.begin(), controller.output_times.end())) {
    throw std::invalid_argument("integrate: output_times must be sorted");
  }

  const ReducedDynamics dyn(state.K, state.L);
  const bool record_all = controller.output_times.empty();
  auto next_output = controller.output_times.begin();
  while (next_output != controller.output_times.end() && *next_output <= 0.0) ++next_output;

  std::vector<TrajectoryRow> rows;
  rows.push_back(make_row(0.0, state.a));

  Vector a = state.a;
  double t = 0.0;
  double h = controller.initial_step;
  while (t < t_end) {
    double target = t_end;
    if (!record_all && next_output != controller.output_times.end()) {
      target = std::min(target, *next_output);
    }
    const double step = std::min({h, target - t, controller.max_step});

    const Vector k1 = dyn.rhs(a);
    const Vector k2 = dyn.rhs(a + 0.5 * step * k1);
    const Vector k3 = dyn.rhs(a + 0.5 * step * k2);
    const Vector k4 = dyn.rhs(a + step * k3);
    const Vector next = a + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

    const bool positive = (next.array() > 0.0).all() && next.allFinite();
    const double change = positive ? ((next - a).array().abs() / a.array()).maxCoeff()
                                   : std::numeric_limits<double>::infinity();
    if (change > controller.max_relative_change) {
      h = 0.5 * step;
      if (h < controller.min_step) throw StepUnderflow(t, a);
      continue;
    }

    a = next;
    const bool hit_target = (step == target - t);
    t = hit_target ? target : t + step;
    if (change < 0.25 * controller.max_relative_change) h = std::min(1.5 * step, controller.max_step);
    else h = std::max(step, h);

    const bool at_output = !record_all && next_output != controller.output_times.end() &&
                           hit_target && t == *next_output;
    const bool stop = controller.stop_l1 > 0.0 && a.sum() >= controller.stop_l1;
    if (record_all || at_output || stop || t >= t_end) rows.push_back(make_row(t, a));
    if (at_output) {
      while (next_output != controller.output_times.end() && *next_output <= t) ++next_output;
    }
    if (stop) break;
  }
  return rows;
}

std::string trajectory_csv(const std::vector<TrajectoryRow>& rows, int K) {
  std::string out = "t";
  for (int i = 1; i < K; ++i) out += ",a_" + std::to_string(i);
  out += ",l1_norm,kl,eff_rank\n";
  for (const TrajectoryRow& r : rows) {
    std::vector<double> values{r.t};
    values.insert(values.end(), r.a.begin(), r.a.end());
    values.insert(values.end(), {r.l1, r.kl, r.eff_rank});
    out += csv::row(values) + "\n";
  }
  return out;
}

double dnc_stability_threshold(int K, int L) {
  require_power_of_two(K, 2);
  if (L < 1) throw std::invalid_argument("dnc_stability_threshold: L must be >= 1");
  return (L - 1.0) * (K - 1.0) / (L + 1.0);
}

double kl_divergence_threshold(int K, int L) {
  require_power_of_two(K, 2);
  if (L <= 1) throw std::domain_error("kl_divergence_threshold: undefined for L = 1");
  return std::pow(static_cast<double>(K) / (K - 2.0), (L + 1.0) / (L - 1.0));
}

SpectralState mixed_init(int K, int L, double gamma, double delta) {
  require_power_of_two(K, 1);
  if (!(gamma > 0.0) || !(delta > 0.0)) {
    throw std::invalid_argument("mixed_init: gamma and delta must be > 0");
  }
  SpectralState state;
  state.K = K;
  state.L = L;
  state.a.resize(K - 1);
  for (int i = 0; i < K - 1; ++i) state.a[i] = (i % 2 == 0) ? gamma : delta;
  return state;
}

SpectralState random_state(int K, int L, double l1_norm, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SpectralState state;
  state.K = K;
  state.L = L;
  state.a.resize(K - 1);
  for (int i = 0; i < K - 1; ++i) {
    double v = 0.0;
    while (v == 0.0) v = unit(rng);
    state.a[i] = v;
  }
  state.a *= l1_norm / state.a.sum();
  return state;
}

Vector uniform_direction(int K) { return Vector::Constant(K - 1, 1.0 / (K - 1)); }

Vector cross_polytope_direction(int K) {
  require_power_of_two(K, 1);
  Vector c = Vector::Zero(K - 1);
  for (int i = 0; i < K - 1; i += 2) c[i] = 2.0 / K;
  return c;
}

ProbeResult stability_probe(const Vector& direction, double scale, int K, int L,
                            double perturbation_size, std::mt19937_64& rng) {
  if (direction.size() != K - 1) throw std::invalid_argument("stability_probe: need K-1 entries");
  if ((direction.array() < 0.0).any()) {
    throw std::invalid_argument("stability_probe: direction has a negative entry");
  }
  if (std::abs(direction.sum() - 1.0) > 1e-9) {
    throw std::invalid_argument("stability_probe: direction must have unit L1 norm");
  }
  if (!(perturbation_size > 0.0) || perturbation_size > 1e-3 * scale) {
    throw std::invalid_argument("stability_probe: perturbation_size must be in (0, 1e-3 scale]");
  }

  std::normal_distribution<double> normal(0.0, 1.0);
  Vector p(K - 1);
  int support = 0;
  for (int i = 0; i < K - 1; ++i) {
    p[i] = normal(rng);
    if (direction[i] == 0.0) p[i] = std::abs(p[i]);
    else ++support;
  }
  const double excess = p.sum() / support;
  for (int i = 0; i < K - 1; ++i) {
    if (direction[i] != 0.0) p[i] -= excess;
  }
  p *= perturbation_size / p.lpNorm<1>();

  const Vector a = scale * direction + p;
  const ReducedDynamics dyn(K, L);
  const Vector velocity = dyn.rhs(a);
  const double l1 = a.sum();
  const Vector a_hat = a / l1;
  const Vector a_hat_dot = (velocity - a_hat * velocity.sum()) / l1;
  const Vector offset = a_hat - direction;

  ProbeResult result;
  result.derivative = offset.dot(a_hat_dot) / offset.norm();
  result.sign = (result.derivative > 0.0) - (result.derivative < 0.0);
  return result;
}

double support_margin_lp(int K, const std::vector<int>& support) {
  require_power_of_two(K, 1);
  const int s = static_cast<int>(support.size());
  if (s == 0) return 0.0;
  for (int u : support) {
    if (u < 1 || u >= K) throw std::invalid_argument("support_margin_lp: mode out of range");
  }

  // maximize t  s.t.  t - sum_u (1 - phi_k(u)) a_u <= 0  (k = 1..K-1),
  //                   sum_u a_u <= 1,   a, t >= 0.
  // b >= 0, so the slack basis is feasible and no phase one is needed.
  // Dense tableau, Bland's rule (the problem is heavily degenerate at b = 0).
  const int vars = s + 1;
  const int rows = K;  // K-1 gap rows plus the simplex row
  const int cols = vars + rows + 1;
  Eigen::MatrixXd tab = Eigen::MatrixXd::Zero(rows + 1, cols);
  for (int k = 1; k < K; ++k) {
    const int r = k - 1;
    for (int j = 0; j < s; ++j) {
      const int parity = std::popcount(static_cast<unsigned>(k & support[j])) & 1;
      tab(r, j) = parity ? -2.0 : 0.0;
    }
    tab(r, s) = 1.0;
    tab(r, vars + r) = 1.0;
  }
  for (int j = 0; j < s; ++j) tab(rows - 1, j) = 1.0;
  tab(rows - 1, vars + rows - 1) = 1.0;
  tab(rows - 1, cols - 1) = 1.0;
  tab(rows, s) = -1.0;  // objective row holds -c

  std::vector<int> basis(rows);
  std::iota(basis.begin(), basis.end(), vars);
  constexpr double kEps = 1e-12;
  for (int iter = 0; iter < 10000; ++iter) {
    int enter = -1;
    for (int j = 0; j < cols - 1; ++j) {
      if (tab(rows, j) < -kEps) {
        enter = j;
        break;
      }
    }
    if (enter < 0) return tab(rows, cols - 1);
    int leave = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < rows; ++r) {
      if (tab(r, enter) > kEps) {
        const double ratio = tab(r, cols - 1) / tab(r, enter);
        if (ratio < best - kEps || (std::abs(ratio - best) <= kEps && basis[r] < basis[leave])) {
          best = ratio;
          leave = r;
        }
      }
    }
    if (leave < 0) throw std::logic_error("support_margin_lp: unbounded (cannot happen)");
    tab.row(leave) /= tab(leave, enter);
    for (int r = 0; r <= rows; ++r) {
      if (r != leave && tab(r, enter) != 0.0) tab.row(r) -= tab(r, enter) * tab.row(leave);
    }
    basis[leave] = enter;
  }
  throw std::logic_error("support_margin_lp: iteration limit");
}

bool support_spans(int K, const std::vector<int>& support) {
  const int m = linalg::log2_exact(K);
  // Gaussian elimination over GF(2) on bit-vectors.
  std::vector<unsigned> pivots(m, 0u);
  int rank = 0;
  for (int u : support) {
    auto v = static_cast<unsigned>(u);
    for (int bit = m - 1; bit >= 0 && v; --bit) {
      if (!(v >> bit & 1u)) continue;
      if (!pivots[bit]) {
        pivots[bit] = v;
        ++rank;
        v = 0;
      } else {
        v ^= pivots[bit];
      }
    }
  }
  return rank == m;
}

FeasibleRank min_feasible_rank(int K) {
  require_power_of_two(K, 1);
  if (K > 64) throw std::invalid_argument("min_feasible_rank: K > 64 is too large to enumerate");
  FeasibleRank result;
  const int modes = K - 1;
  for (int size = 1; size <= modes; ++size) {
    std::vector<int> idx(size);
    std::iota(idx.begin(), idx.end(), 1);
    std::optional<std::vector<int>> first;
    while (true) {
      const bool lp = support_margin_lp(K, idx) > 1e-9;
      const bool span = support_spans(K, idx);
      ++result.supports_checked;
      if (lp != span) throw std::logic_error("min_feasible_rank: LP and GF(2) criteria disagree");
      if (lp && !first) first = idx;
      // next combination of {1..modes}
      int pos = size - 1;
      while (pos >= 0 && idx[pos] == modes - size + pos + 1) --pos;
      if (pos < 0) break;
      ++idx[pos];
      for (int j = pos + 1; j < size; ++j) idx[j] = idx[j - 1] + 1;
    }
    if (first) {
      result.rank = size;
      result.witness = *first;
      return result;
    }
  }
  throw std::logic_error("min_feasible_rank: no feasible support");
}

ScaleMap scale_map(const model::ProblemSpec& spec) {
  spec.validate();
  const double k_root_n = spec.K * std::sqrt(static_cast<double>(spec.n));
  ScaleMap map;
  map.a_scale = 1.0 / k_root_n;
  map.t_scale = (spec.L + 1.0) * std::pow(k_root_n, 2.0 * spec.L / (spec.L + 1.0)) / spec.K;
  return map;
}

}  // namespace ufm::spectral
