#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedmpt/config.hpp"
#include "fedmpt/report.hpp"

namespace fedmpt {

// Everything derived from a config before training starts.
struct Experiment {
  std::shared_ptr<const Encoders> encoders;
  Dataset train;
  Dataset eval;
  std::vector<std::vector<std::size_t>> shards;
  std::vector<std::string> class_names;
};

Experiment build_experiment(const RunConfig& cfg);
std::unique_ptr<Model> build_model(const RunConfig& cfg, std::shared_ptr<const Encoders> encoders,
                                   const std::vector<std::string>& class_names);

struct RunOutcome {
  RunReport report;
  ParameterBundle bundle;
};

// Runs the full schedule in memory. Numerical failures are rethrown as
// NumericalError naming the round.
RunOutcome execute_run(const RunConfig& cfg,
                       const std::function<void(const EvalRecord&)>& on_eval = {});

// execute_run + write_report into the resolved output directory.
std::filesystem::path run_and_persist(const RunConfig& cfg,
                                      const std::function<void(const EvalRecord&)>& on_eval = {});

enum class SweepAxis { kT, kMask, kParticipation };
SweepAxis parse_sweep_axis(const std::string& text);
std::string to_string(SweepAxis axis);
RunConfig with_axis_value(RunConfig cfg, SweepAxis axis, double value);

struct SweepRow {
  double value = 0.0;
  bool ok = false;
  std::string error;
  std::vector<std::size_t> shard_sizes;
  EvalRecord final_record;
};

// One run per value in request order; failed runs are kept with a marker.
// Writes summary.json and summary.csv under <output_dir>/sweep_<axis>.
std::vector<SweepRow> run_sweep(const RunConfig& base, SweepAxis axis,
                                std::span<const double> values,
                                std::filesystem::path* summary_dir = nullptr);

}  // namespace fedmpt
