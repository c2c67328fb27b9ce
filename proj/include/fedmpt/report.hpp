#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fedmpt/bundle.hpp"
#include "fedmpt/config.hpp"
#include "fedmpt/fedsim.hpp"

namespace fedmpt {

struct RunReport {
  RunConfig config;
  std::vector<std::size_t> shard_sizes;
  std::vector<EvalRecord> records;
  std::string bundle_file = "bundle.json";
};

// Metric records only (no timings): byte-stable for a given config.
std::string metrics_csv(const std::vector<EvalRecord>& records);
nlohmann::ordered_json records_to_json(const std::vector<EvalRecord>& records);

// Writes report.json, metrics.csv and the bundle file into `dir`.
void write_report(const std::filesystem::path& dir, const RunReport& report,
                  const ParameterBundle& bundle);
RunReport read_report(const std::filesystem::path& report_json);

struct CompareRow {
  std::size_t round = 0;
  double map_a = 0.0, map_b = 0.0;
  double d_map = 0.0, d_cf1 = 0.0, d_of1 = 0.0;  // b - a
};

struct Comparison {
  std::vector<CompareRow> rows;
  double slope_a = 0.0;  // final minus first mAP
  double slope_b = 0.0;
};

// Throws ContractError unless both reports share an eval schedule.
Comparison compare_reports(const RunReport& a, const RunReport& b);
std::string comparison_csv(const Comparison& cmp);
nlohmann::ordered_json comparison_to_json(const Comparison& cmp);

// Shortest text that round-trips the double.
std::string format_double(double v);

}  // namespace fedmpt
