// fedmpt: run, sweep and compare federated condition-prompt experiments.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedmpt/error.hpp"
#include "fedmpt/report.hpp"
#include "fedmpt/runner.hpp"

namespace {

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw fedmpt::ConfigError("sweep value \"" + item + "\" is not a number");
    out.push_back(v);
  }
  if (out.empty()) throw fedmpt::ConfigError("sweep needs at least one value");
  return out;
}

void print_record(const fedmpt::EvalRecord& r) {
  std::fprintf(stderr, "round %zu  mAP %.4f  CF1 %.4f  OF1 %.4f  loss %.4f\n", r.round, r.map,
               r.cf1, r.of1, r.mean_train_loss);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated multi-label condition-prompt simulator"};
  app.require_subcommand(1);

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run one experiment from a config file");
  run->add_option("config", config_path, "Config JSON")->required();
  bool quiet = false;
  run->add_flag("-q,--quiet", quiet, "Suppress per-round progress");

  std::string sweep_config, axis, values;
  auto* sweep = app.add_subcommand("sweep", "Run one experiment per axis value");
  sweep->add_option("config", sweep_config, "Config JSON")->required();
  sweep->add_option("--axis", axis, "t | mask | participation")->required();
  sweep->add_option("--values", values, "Comma-separated values")->required();

  std::string report_a, report_b, compare_out;
  auto* compare = app.add_subcommand("compare", "Per-eval-point deltas between two reports");
  compare->add_option("report_a", report_a, "report.json of run A")->required();
  compare->add_option("report_b", report_b, "report.json of run B")->required();
  compare->add_option("--out", compare_out, "Write the comparison JSON here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const fedmpt::RunConfig cfg = fedmpt::load_config(config_path);
      const auto dir = fedmpt::run_and_persist(
          cfg, quiet ? std::function<void(const fedmpt::EvalRecord&)>{} : print_record);
      std::cout << (dir / "report.json").string() << '\n';
    } else if (*sweep) {
      const fedmpt::RunConfig cfg = fedmpt::load_config(sweep_config);
      const auto parsed_axis = fedmpt::parse_sweep_axis(axis);
      const std::vector<double> list = parse_values(values);
      std::filesystem::path dir;
      const auto rows = fedmpt::run_sweep(cfg, parsed_axis, list, &dir);
      std::cout << (dir / "summary.csv").string() << '\n';
      bool all_ok = true;
      for (const auto& r : rows) {
        if (!r.ok) {
          std::cerr << "value " << r.value << " failed: " << r.error << '\n';
          all_ok = false;
        }
      }
      return all_ok ? 0 : 3;
    } else if (*compare) {
      const auto cmp = fedmpt::compare_reports(fedmpt::read_report(report_a),
                                               fedmpt::read_report(report_b));
      std::cout << fedmpt::comparison_csv(cmp);
      std::cout << "degradation_slope_a," << fedmpt::format_double(cmp.slope_a) << '\n';
      std::cout << "degradation_slope_b," << fedmpt::format_double(cmp.slope_b) << '\n';
      if (!compare_out.empty()) {
        std::ofstream(compare_out) << fedmpt::comparison_to_json(cmp).dump(2) << '\n';
      }
    }
  } catch (const fedmpt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const fedmpt::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
