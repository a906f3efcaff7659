#include "ufmlab/harness.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

namespace {

constexpr int kOk = 0;
constexpr int kDiverged = 2;
constexpr int kAssertion = 3;

using ufm::harness::ExperimentConfig;

int report(const ufm::harness::Manifest& m) {
  std::cout << "wrote " << m.files.size() << " file(s) + manifest.json to " << m.root.string() << "\n";
  for (const auto& r : m.runs) {
    if (r.status != "ok") std::cerr << "run " << r.index << ": " << r.status << ": " << r.message << "\n";
  }
  if (!m.checks_passed) return kAssertion;
  if (m.any_divergence) return kDiverged;
  for (const auto& r : m.runs) {
    if (r.status == "error") return kAssertion;
  }
  return kOk;
}

ExperimentConfig with_overrides(ExperimentConfig c, double scale, int workers) {
  if (scale != 1.0) c = ufm::harness::scale_epochs(std::move(c), scale);
  if (workers > 0) c.workers = workers;
  return c;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(std::stod(item));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deep UFM gradient-flow laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  double scale = 1.0;
  int workers = 0;

  auto* train = app.add_subcommand("train", "run a training sweep from a JSON config");
  train->add_option("--config", config_path, "experiment config")->required()->check(CLI::ExistingFile);
  train->add_option("--scale-epochs", scale, "multiply both epoch phases");
  train->add_option("--workers", workers, "concurrent runs");

  auto* spectral = app.add_subcommand("spectral", "integrate the reduced Hadamard dynamics");
  spectral->add_option("--config", config_path, "experiment config")->required()->check(CLI::ExistingFile);
  spectral->add_option("--workers", workers, "concurrent runs");

  std::string check;
  auto* geometry = app.add_subcommand("geometry", "deterministic geometry checks");
  geometry->add_option("--check", check, "thm1 | thm2 | rank")
      ->required()
      ->check(CLI::IsMember({"thm1", "thm2", "rank"}));

  std::string widths = "64,256,1024";
  int seeds = 5;
  double eps = 0.01;
  auto* conc = app.add_subcommand("concentration", "initial logit velocity vs simplex ETF");
  conc->add_option("--widths", widths, "comma-separated widths");
  conc->add_option("--seeds", seeds, "seeds per width");
  conc->add_option("--eps", eps, "initialization scale");

  std::string name;
  bool dump = false;
  auto* preset = app.add_subcommand("preset", "print or run a built-in preset");
  preset->add_option("name", name, "preset name")->required();
  preset->add_flag("--dump", dump, "print the config as JSON instead of running it");
  preset->add_option("--scale-epochs", scale, "multiply both epoch phases");
  preset->add_option("--workers", workers, "concurrent runs");

  auto* figure = app.add_subcommand("figure", "run a preset, then render it if plots/ is present");
  figure->add_option("name", name, "preset name")->required();
  figure->add_option("--scale-epochs", scale, "multiply both epoch phases");
  figure->add_option("--workers", workers, "concurrent runs");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train || *spectral) {
      ExperimentConfig c = ufm::harness::load_config(config_path);
      const std::string expected = *train ? "train" : "spectral";
      if (c.kind != expected) {
        std::cerr << "config kind is '" << c.kind << "', expected '" << expected << "'\n";
        return kAssertion;
      }
      return report(ufm::harness::run(with_overrides(std::move(c), scale, workers)));
    }
    if (*geometry) {
      const auto result = ufm::harness::geometry_check(check);
      std::cout << result.csv;
      for (const auto& f : result.failures) std::cerr << "FAIL " << f << "\n";
      return result.passed ? kOk : kAssertion;
    }
    if (*conc) {
      ExperimentConfig c = ufm::harness::preset("concentration");
      c.sweep.values = parse_list(widths);
      c.repetitions = seeds;
      c.init.eps = eps;
      const auto rows = ufm::harness::concentration_experiment(c);
      std::cout << "d,M_mean,M_std\n";
      for (const auto& r : rows) std::cout << r.d << "," << r.mean << "," << r.std << "\n";
      for (std::size_t i = 1; i < rows.size(); ++i) {
        if (!(rows[i].mean < rows[i - 1].mean)) return kAssertion;
      }
      return kOk;
    }
    if (*preset) {
      ExperimentConfig c = with_overrides(ufm::harness::preset(name), scale, workers);
      if (dump) {
        std::cout << nlohmann::json(c).dump(2) << "\n";
        return kOk;
      }
      return report(ufm::harness::run(c));
    }
    if (*figure) {
      const ExperimentConfig c = with_overrides(ufm::harness::preset(name), scale, workers);
      const int code = report(ufm::harness::run(c));
      const std::filesystem::path renderer = "plots/render";
      if (std::filesystem::exists(renderer)) {
        const std::string out = ufm::harness::output_root(c).string();
        const std::string cmd = renderer.string() + " " + name + " --in " + out + " --out " + out;
        if (std::system(cmd.c_str()) != 0) std::cerr << "plotting failed\n";
      } else {
        std::cerr << "plots/render not found; skipped rendering\n";
      }
      return code;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kAssertion;
  }
  return kOk;
}
