#include "ufmlab/harness.hpp"

#include "ufmlab/csv.hpp"
#include "ufmlab/geometry.hpp"
#include "ufmlab/spectral.hpp"

#include <Eigen/Eigenvalues>
#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>

namespace ufm::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::set<std::string> kKinds{"train", "spectral", "concentration", "geometry"};
const std::set<std::string> kSweepVars{"none", "L", "d", "K", "n", "eps", "l1_norm"};
const std::set<std::string> kChecks{"thm1", "thm2", "rank"};

std::string pad(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03d", i);
  return buf;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void ExperimentConfig::validate() const {
  if (!kKinds.count(kind)) throw std::invalid_argument("unknown experiment kind: " + kind);
  if (repetitions < 1) throw std::invalid_argument("repetitions must be >= 1");
  if (workers < 1) throw std::invalid_argument("workers must be >= 1");
  if (sweep.values.empty()) throw std::invalid_argument("sweep values must be nonempty");
  if (!kSweepVars.count(sweep.variable)) {
    throw std::invalid_argument("unknown sweep variable: " + sweep.variable);
  }
  if (output_dir.empty()) throw std::invalid_argument("output_dir must be set");
  if (kind == "geometry") {
    if (!kChecks.count(check)) throw std::invalid_argument("geometry check must be thm1|thm2|rank");
    return;
  }
  const bool hadamard_modes = kind == "spectral" || (kind == "train" && init.kind == "hadamard");
  for (double v : sweep.values) {
    const model::ProblemSpec s = spec_for(*this, v);
    s.validate();
    if (hadamard_modes && !linalg::is_power_of_two(s.K)) {
      throw std::invalid_argument("K must be a power of two for " + kind + " runs");
    }
    if (kind == "train" && init.kind == "hadamard" && init.alpha.size() != static_cast<std::size_t>(s.K)) {
      throw std::invalid_argument("init.alpha must have K entries");
    }
  }
  if (kind == "train") {
    schedule.validate();
    if (init.kind != "random" && init.kind != "hadamard") {
      throw std::invalid_argument("train init must be random or hadamard");
    }
  }
  if (kind == "spectral") {
    if (init.kind != "uniform_random" && init.kind != "mixed") {
      throw std::invalid_argument("spectral init must be uniform_random or mixed");
    }
    if (!(t_end > 0.0)) throw std::invalid_argument("t_end must be > 0");
  }
  if ((kind == "train" && init.kind == "random") || kind == "concentration") {
    if (!(init.eps > 0.0)) throw std::invalid_argument("init.eps must be > 0");
  }
}

void to_json(json& j, const ExperimentConfig& c) {
  const auto& s = c.schedule;
  j = json{{"name", c.name},
           {"kind", c.kind},
           {"spec", {{"K", c.spec.K}, {"n", c.spec.n}, {"d", c.spec.d}, {"L", c.spec.L}}},
           {"schedule",
            {{"step_size", s.step_size},
             {"epochs_phase1", s.epochs_phase1},
             {"lambda_phase1", s.lambda_phase1},
             {"epochs_phase2", s.epochs_phase2},
             {"log_every", s.log_every},
             {"stop_loss", s.stop_loss ? json(*s.stop_loss) : json(nullptr)},
             {"max_halvings", s.max_halvings}}},
           {"init",
            {{"kind", c.init.kind},
             {"eps", c.init.eps},
             {"seed", c.init.seed},
             {"l1_norm", c.init.l1_norm},
             {"gamma", c.init.gamma},
             {"delta", c.init.delta},
             {"alpha", c.init.alpha}}},
           {"sweep", {{"variable", c.sweep.variable}, {"values", c.sweep.values}}},
           {"repetitions", c.repetitions},
           {"output_dir", c.output_dir},
           {"zero_tol_rel", c.zero_tol_rel},
           {"workers", c.workers},
           {"t_end", c.t_end},
           {"check", c.check}};
}

void from_json(const json& j, ExperimentConfig& c) {
  // Missing keys keep their defaults so hand-written configs can be partial.
  c = ExperimentConfig{};
  auto get = [](const json& obj, const char* key, auto& field) {
    if (obj.contains(key)) obj.at(key).get_to(field);
  };
  get(j, "name", c.name);
  get(j, "kind", c.kind);
  if (j.contains("spec")) {
    const json& s = j.at("spec");
    get(s, "K", c.spec.K);
    get(s, "n", c.spec.n);
    get(s, "d", c.spec.d);
    get(s, "L", c.spec.L);
  }
  if (j.contains("schedule")) {
    const json& s = j.at("schedule");
    get(s, "step_size", c.schedule.step_size);
    get(s, "epochs_phase1", c.schedule.epochs_phase1);
    get(s, "lambda_phase1", c.schedule.lambda_phase1);
    get(s, "epochs_phase2", c.schedule.epochs_phase2);
    get(s, "log_every", c.schedule.log_every);
    get(s, "max_halvings", c.schedule.max_halvings);
    if (s.contains("stop_loss")) {
      if (s.at("stop_loss").is_null()) c.schedule.stop_loss.reset();
      else c.schedule.stop_loss = s.at("stop_loss").get<double>();
    }
  }
  if (j.contains("init")) {
    const json& s = j.at("init");
    get(s, "kind", c.init.kind);
    get(s, "eps", c.init.eps);
    get(s, "seed", c.init.seed);
    get(s, "l1_norm", c.init.l1_norm);
    get(s, "gamma", c.init.gamma);
    get(s, "delta", c.init.delta);
    get(s, "alpha", c.init.alpha);
  }
  if (j.contains("sweep")) {
    get(j.at("sweep"), "variable", c.sweep.variable);
    get(j.at("sweep"), "values", c.sweep.values);
  }
  get(j, "repetitions", c.repetitions);
  get(j, "output_dir", c.output_dir);
  get(j, "zero_tol_rel", c.zero_tol_rel);
  get(j, "workers", c.workers);
  get(j, "t_end", c.t_end);
  get(j, "check", c.check);
}

ExperimentConfig load_config(const fs::path& path) {
  ExperimentConfig c = json::parse(read_file(path)).get<ExperimentConfig>();
  c.validate();
  return c;
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{
      "fig2",          "fig3-angles", "fig3-margins", "fig4-velocity", "fig4-rank", "fig6-hadamard",
      "fig8-kl",       "thm1-grid",   "thm2-kgon",    "prop-rank",     "concentration"};
  return names;
}

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  c.name = name;
  c.output_dir = "out/" + name;
  model::TrainSchedule long_run;
  long_run.step_size = 0.08;
  long_run.epochs_phase1 = 200000;
  long_run.lambda_phase1 = 1e-3;
  long_run.epochs_phase2 = 100000;
  long_run.log_every = 1000;

  if (name == "fig2") {
    c.kind = "train";
    c.spec = {10, 5, 100, 1};
    c.schedule = long_run;
    c.schedule.lambda_phase1 = 0.0;
    c.init.kind = "random";
    c.init.eps = 0.3;
    c.sweep = {"L", {1, 2, 3, 4}};
    c.repetitions = 5;
  } else if (name == "fig3-angles") {
    c.kind = "train";
    c.spec = {8, 5, 8, 10};
    c.schedule = long_run;
    c.init.kind = "random";
    c.init.eps = 1.0;
    c.sweep = {"none", {0}};
    c.repetitions = 10;
  } else if (name == "fig3-margins") {
    c.kind = "train";
    c.spec = {4, 5, 4, 4};
    c.schedule = long_run;
    c.init.kind = "random";
    c.init.eps = 1.0;
    c.sweep = {"K", {4, 6, 8, 10}};
    c.repetitions = 5;
  } else if (name == "fig4-velocity" || name == "concentration") {
    c.kind = "concentration";
    c.spec = {10, 5, 64, 3};
    c.init.kind = "random";
    c.init.eps = 0.01;
    c.sweep = name == "concentration" ? SweepConfig{"d", {64, 256, 1024}}
                                      : SweepConfig{"d", {16, 32, 64, 128, 256, 512, 1024}};
    c.repetitions = 5;
  } else if (name == "fig4-rank") {
    c.kind = "train";
    c.spec = {10, 5, 16, 3};
    c.schedule = long_run;
    c.schedule.lambda_phase1 = 0.0;
    c.init.kind = "random";
    c.init.eps = 0.01;
    c.sweep = {"d", {16, 32, 64, 128}};
    c.repetitions = 5;
  } else if (name == "fig6-hadamard") {
    c.kind = "spectral";
    c.spec = {16, 1, 16, 2};
    c.init.kind = "uniform_random";
    c.init.l1_norm = 1e-3;
    c.t_end = 1e3;
    c.repetitions = 5;
  } else if (name == "fig8-kl") {
    c.kind = "spectral";
    c.spec = {16, 1, 16, 2};
    c.init.kind = "mixed";
    c.init.gamma = 0.2;
    c.init.delta = 0.1;
    c.t_end = 1e3;
  } else if (name == "thm1-grid" || name == "thm2-kgon" || name == "prop-rank") {
    c.kind = "geometry";
    c.check = name == "thm1-grid" ? "thm1" : name == "thm2-kgon" ? "thm2" : "rank";
  } else {
    throw std::invalid_argument("unknown preset: " + name);
  }
  return c;
}

ExperimentConfig scale_epochs(ExperimentConfig config, double factor) {
  if (!(factor > 0.0)) throw std::invalid_argument("scale factor must be > 0");
  auto scale = [factor](long epochs) {
    return epochs == 0 ? 0L : std::max(1L, std::lround(static_cast<double>(epochs) * factor));
  };
  config.schedule.epochs_phase1 = scale(config.schedule.epochs_phase1);
  config.schedule.epochs_phase2 = scale(config.schedule.epochs_phase2);
  return config;
}

model::ProblemSpec spec_for(const ExperimentConfig& config, double v) {
  model::ProblemSpec s = config.spec;
  const int iv = static_cast<int>(std::lround(v));
  const std::string& var = config.sweep.variable;
  if (var == "L") s.L = iv;
  else if (var == "d") s.d = iv;
  else if (var == "n") s.n = iv;
  else if (var == "K") {
    s.K = iv;
    s.d = std::max(s.d, iv);
  }
  return s;
}

fs::path output_root(const ExperimentConfig& config) {
  if (const char* env = std::getenv("UFMLAB_OUT"); env && *env) return fs::path(env) / config.name;
  return fs::path(config.output_dir);
}

std::string git_blob_sha1(const std::string& bytes) {
  const std::string header = "blob " + std::to_string(bytes.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw std::runtime_error("EVP_MD_CTX_new failed");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("SHA-1 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

Stat mean_std(const std::vector<double>& values) {
  Stat s;
  if (values.empty()) return {std::nan(""), std::nan("")};
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double acc = 0.0;
    for (double v : values) acc += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(acc / static_cast<double>(values.size() - 1));
  }
  return s;
}

int classify_rank(const linalg::Matrix& z, double zero_tol_rel) {
  const linalg::SingularSpectrum s = linalg::singular_values(z);
  if (s.largest() <= 0.0) return -1;
  const double eff = linalg::effective_rank(s, zero_tol_rel * s.largest());
  const int r = static_cast<int>(std::lround(eff));
  if (r < 1) return -1;
  const double next = static_cast<std::size_t>(r) < s.size() ? s[r] : 0.0;
  return next <= 1e-3 * s.largest() ? r : -1;
}

namespace {

model::ProblemSpec concentration_spec(const ExperimentConfig& c, double v) { return spec_for(c, v); }

double init_eps(const ExperimentConfig& c, double v) {
  return c.sweep.variable == "eps" ? v : c.init.eps;
}

double velocity_metric(const model::ProblemSpec& spec, double eps, std::uint64_t seed) {
  const model::ModelParams p = model::random_init(spec, eps, seed);
  const linalg::Matrix v = model::logit_velocity(p, spec);
  return linalg::direction_distance(v, linalg::kron_ones(linalg::simplex_etf(spec.K), spec.n));
}

// lambda_min / lambda_max of the symmetric part of the class-mean logits.
double psd_ratio(const linalg::Matrix& z, int n) {
  const Eigen::Index K = z.rows();
  Eigen::MatrixXd mean(K, K);
  for (Eigen::Index c = 0; c < K; ++c) mean.col(c) = z.middleCols(c * n, n).rowwise().mean();
  const Eigen::MatrixXd sym = 0.5 * (mean + mean.transpose());
  const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sym).eigenvalues();
  return ev[0] / ev[K - 1];
}

void train_run(const ExperimentConfig& c, double v, const fs::path& root, RunRecord& rec) {
  const model::ProblemSpec spec = spec_for(c, v);
  model::ModelParams init;
  if (c.init.kind == "hadamard") {
    init = model::hadamard_init(spec, c.init.alpha, rec.seed);
  } else {
    init = model::random_init(spec, init_eps(c, v), rec.seed);
  }
  try {
    const model::TrainResult result = model::train(std::move(init), spec, c.schedule, c.zero_tol_rel);
    write_file(root / rec.file, result.log.to_csv());
    const model::RunRow& last = result.log.rows.back();
    auto& m = rec.final_metrics;
    m["epoch"] = static_cast<double>(last.epoch);
    m["loss"] = last.loss;
    m["eff_rank"] = last.eff_rank;
    m["kl"] = last.kl;
    m["raw_margin"] = last.raw_margin;
    m["norm_margin"] = last.norm_margin;
    m["balance_res"] = last.balance_residual;
    m["dist_to_etf"] = last.dist_to_etf;
    m["step_size"] = result.final_step_size;
    m["halvings"] = result.halvings;
    const linalg::Matrix z = model::logits(result.params);
    const int rank = classify_rank(z, c.zero_tol_rel);
    m["rank_class"] = rank;
    if (rank == 2 && spec.K > 2) {
      m["psd_ratio"] = psd_ratio(z, spec.n);
      try {
        const std::vector<double> gaps = geometry::gram_factor_angles(z, spec.n);
        m["min_gap_deg"] = gaps.front();
        m["max_gap_deg"] = gaps.back();
      } catch (const std::domain_error& e) {
        rec.message = e.what();
        // Diagnostic only: gaps under a loose PSD tolerance, never used for a verdict.
        try {
          const std::vector<double> gaps = geometry::gram_factor_angles(z, spec.n, {1e-3, 1e-2});
          m["loose_min_gap_deg"] = gaps.front();
          m["loose_max_gap_deg"] = gaps.back();
        } catch (const std::domain_error&) {
        }
      }
    }
  } catch (const model::DivergenceError& e) {
    rec.status = "diverged";
    rec.message = e.what();
    rec.final_metrics["epoch"] = static_cast<double>(e.epoch());
  }
}

void spectral_run(const ExperimentConfig& c, double v, const fs::path& root, RunRecord& rec) {
  const model::ProblemSpec spec = spec_for(c, v);
  spectral::SpectralState state;
  if (c.init.kind == "mixed") {
    state = spectral::mixed_init(spec.K, spec.L, c.init.gamma, c.init.delta);
  } else {
    std::mt19937_64 rng(rec.seed);
    const double l1 = c.sweep.variable == "l1_norm" ? v : c.init.l1_norm;
    state = spectral::random_state(spec.K, spec.L, l1, rng);
  }
  spectral::StepController ctl;
  constexpr int kSamples = 400;
  for (int i = 0; i < kSamples; ++i) {
    ctl.output_times.push_back(c.t_end * std::pow(10.0, -6.0 + 6.0 * i / (kSamples - 1)));
  }
  const auto rows = spectral::integrate(state, c.t_end, ctl);
  write_file(root / rec.file, spectral::trajectory_csv(rows, spec.K));
  auto& m = rec.final_metrics;
  m["t"] = rows.back().t;
  m["l1_norm"] = rows.back().l1;
  m["kl"] = rows.back().kl;
  m["kl_initial"] = rows.front().kl;
  m["eff_rank"] = rows.back().eff_rank;
  m["dead_modes"] = static_cast<double>((rows.back().a_hat.array() < 1e-3).count());
}

void concentration_run(const ExperimentConfig& c, double v, const fs::path& root, RunRecord& rec) {
  const model::ProblemSpec spec = concentration_spec(c, v);
  const double metric = velocity_metric(spec, init_eps(c, v), rec.seed);
  rec.final_metrics["M"] = metric;
  write_file(root / rec.file, "d,seed,M\n" + std::to_string(spec.d) + "," +
                                  std::to_string(rec.seed) + "," + csv::format(metric) + "\n");
}

std::vector<std::string> summary_metrics(const std::string& kind) {
  if (kind == "train") return {"eff_rank", "loss", "norm_margin", "kl", "dist_to_etf"};
  if (kind == "spectral") return {"eff_rank", "kl", "l1_norm"};
  return {"M"};
}

std::string summary_csv(const ExperimentConfig& c, const std::vector<RunRecord>& runs) {
  const std::vector<std::string> metrics = summary_metrics(c.kind);
  std::string out = (c.sweep.variable == "none" ? std::string("value") : c.sweep.variable) + ",runs";
  for (const auto& m : metrics) out += "," + m + "_mean," + m + "_std";
  out += "\n";
  for (double v : c.sweep.values) {
    std::vector<std::vector<double>> samples(metrics.size());
    int ok = 0;
    for (const RunRecord& r : runs) {
      if (r.sweep_value != v || r.status != "ok") continue;
      ++ok;
      for (std::size_t i = 0; i < metrics.size(); ++i) samples[i].push_back(r.final_metrics.at(metrics[i]));
    }
    std::vector<double> row{v, static_cast<double>(ok)};
    for (const auto& s : samples) {
      const Stat st = mean_std(s);
      row.push_back(st.mean);
      row.push_back(st.std);
    }
    out += csv::row(row) + "\n";
  }
  return out;
}

}  // namespace

std::vector<ConcentrationRow> concentration_experiment(const ExperimentConfig& config) {
  config.validate();
  std::vector<ConcentrationRow> rows;
  int index = 0;
  for (double v : config.sweep.values) {
    ConcentrationRow row;
    const model::ProblemSpec spec = concentration_spec(config, v);
    row.d = spec.d;
    for (int rep = 0; rep < config.repetitions; ++rep, ++index) {
      row.samples.push_back(velocity_metric(spec, init_eps(config, v), config.init.seed + index));
    }
    const Stat s = mean_std(row.samples);
    row.mean = s.mean;
    row.std = s.std;
    rows.push_back(std::move(row));
  }
  return rows;
}

CheckResult geometry_check(const std::string& which) {
  CheckResult res;
  auto fail = [&res](std::string msg) {
    res.passed = false;
    res.failures.push_back(std::move(msg));
  };
  if (which == "thm1") {
    res.csv = "L,K,dnc_objective,cp_objective,cp_label,cp_wins,expected_cp_wins,feasible\n";
    std::vector<std::pair<int, int>> grid{{2, 4}, {2, 6}, {2, 8}, {2, 10}, {2, 12}};
    for (int L = 3; L <= 5; ++L) {
      for (int K = 4; K <= 12; ++K) grid.emplace_back(L, K);
    }
    for (auto [L, K] : grid) {
      const model::ProblemSpec spec{K, 5, K, L};
      const auto dnc = geometry::dnc_construction(spec);
      const auto cp = geometry::cross_polytope_construction(spec);
      const bool wins = cp.objective_value < dnc.objective_value;
      const bool expect = !(L == 2 && K == 4);
      bool feasible = geometry::margin_feasible(dnc.logits, spec) &&
                      geometry::margin_feasible(cp.logits, spec);
      const auto dnc_low = geometry::dnc_construction(spec, 0.99 * dnc.scale);
      const auto cp_low = geometry::cross_polytope_construction(spec, 0.99 * cp.scale);
      feasible = feasible && !geometry::margin_feasible(dnc_low.logits, spec) &&
                 !geometry::margin_feasible(cp_low.logits, spec);
      for (const auto* g : {&dnc, &cp}) {
        const double schatten = geometry::max_margin_objective(g->logits, L);
        if (std::abs(schatten - g->objective_value) > 1e-10 * g->objective_value) {
          fail("objective mismatch for " + g->label + " L=" + std::to_string(L) + " K=" + std::to_string(K));
        }
      }
      if (wins != expect) fail("ordering L=" + std::to_string(L) + " K=" + std::to_string(K));
      if (!feasible) fail("feasibility L=" + std::to_string(L) + " K=" + std::to_string(K));
      res.csv += std::to_string(L) + "," + std::to_string(K) + "," + csv::format(dnc.objective_value) +
                 "," + csv::format(cp.objective_value) + "," + cp.label + "," + (wins ? "1" : "0") +
                 "," + (expect ? "1" : "0") + "," + (feasible ? "1" : "0") + "\n";
    }
  } else if (which == "thm2") {
    res.csv = "K,argmin_delta,target_delta,objective_at_target\n";
    constexpr double kStep = 1e-4;
    for (int K = 3; K <= 12; ++K) {
      const double target = 2.0 * std::numbers::pi / K;
      double best = std::numeric_limits<double>::infinity();
      double arg = 0.0;
      auto visit = [&](double delta) {
        const double f = geometry::kgon_objective(delta, K);
        if (f < best) {
          best = f;
          arg = delta;
        }
      };
      for (long k = 1; k * kStep < target; ++k) visit(k * kStep);
      visit(target);
      if (std::abs(arg - target) > 1e-3) fail("argmin off target for K=" + std::to_string(K));
      res.csv += std::to_string(K) + "," + csv::format(arg) + "," + csv::format(target) + "," +
                 csv::format(geometry::kgon_objective(target, K)) + "\n";
    }
  } else if (which == "rank") {
    res.csv = "K,rank,expected,witness,supports_checked\n";
    for (auto [K, expected] : {std::pair{4, 2}, std::pair{8, 3}, std::pair{16, 4}}) {
      spectral::FeasibleRank fr;
      try {
        fr = spectral::min_feasible_rank(K);
      } catch (const std::logic_error& e) {
        fail(e.what());
        continue;
      }
      if (fr.rank != expected) fail("rank mismatch for K=" + std::to_string(K));
      std::string witness;
      for (int u : fr.witness) witness += (witness.empty() ? "" : " ") + std::to_string(u);
      res.csv += std::to_string(K) + "," + std::to_string(fr.rank) + "," + std::to_string(expected) +
                 "," + witness + "," + std::to_string(fr.supports_checked) + "\n";
    }
  } else {
    throw std::invalid_argument("unknown geometry check: " + which);
  }
  return res;
}

Manifest run(const ExperimentConfig& config) {
  config.validate();
  Manifest manifest;
  manifest.root = output_root(config);
  fs::create_directories(manifest.root);

  if (config.kind == "geometry") {
    const CheckResult check = geometry_check(config.check);
    manifest.checks_passed = check.passed;
    write_file(manifest.root / "summary.csv", check.csv);
    manifest.files.push_back("summary.csv");
    manifest.json["failures"] = check.failures;
  } else {
    std::vector<RunRecord> runs;
    int index = 0;
    for (double v : config.sweep.values) {
      for (int rep = 0; rep < config.repetitions; ++rep, ++index) {
        RunRecord r;
        r.index = index;
        r.sweep_value = v;
        r.repetition = rep;
        r.seed = config.init.seed + static_cast<std::uint64_t>(index);
        r.file = "run_" + pad(index) + ".csv";
        runs.push_back(std::move(r));
      }
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      for (std::size_t i = next++; i < runs.size(); i = next++) {
        RunRecord& rec = runs[i];
        try {
          if (config.kind == "train") train_run(config, rec.sweep_value, manifest.root, rec);
          else if (config.kind == "spectral") spectral_run(config, rec.sweep_value, manifest.root, rec);
          else concentration_run(config, rec.sweep_value, manifest.root, rec);
        } catch (const std::exception& e) {
          rec.status = "error";
          rec.message = e.what();
        }
      }
    };
    const int nthreads = std::min<int>(config.workers, static_cast<int>(runs.size()));
    std::vector<std::thread> pool;
    for (int t = 1; t < nthreads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    for (const RunRecord& r : runs) {
      if (r.status == "diverged") manifest.any_divergence = true;
      if (r.status == "ok") manifest.files.push_back(r.file);
    }
    write_file(manifest.root / "summary.csv", summary_csv(config, runs));
    manifest.files.insert(manifest.files.begin(), "summary.csv");
    manifest.runs = std::move(runs);
  }

  json& j = manifest.json;
  j["name"] = config.name;
  j["kind"] = config.kind;
  j["config"] = config;
  j["config_sha1"] = git_blob_sha1(json(config).dump());
  j["any_divergence"] = manifest.any_divergence;
  j["checks_passed"] = manifest.checks_passed;
  j["runs"] = json::array();
  for (const RunRecord& r : manifest.runs) {
    j["runs"].push_back({{"index", r.index},
                         {"sweep_value", r.sweep_value},
                         {"repetition", r.repetition},
                         {"seed", r.seed},
                         {"file", r.file},
                         {"status", r.status},
                         {"message", r.message},
                         {"final", r.final_metrics}});
  }
  j["files"] = json::array();
  for (const std::string& f : manifest.files) {
    j["files"].push_back({{"path", f}, {"sha1", git_blob_sha1(read_file(manifest.root / f))}});
  }
  write_file(manifest.root / "manifest.json", j.dump(2) + "\n");
  return manifest;
}

}  // namespace ufm::harness
