#include "fedmpt/report.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "fedmpt/error.hpp"

namespace fedmpt {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string metrics_csv(const std::vector<EvalRecord>& records) {
  std::ostringstream out;
  out << "round,mAP,CF1,OF1,mean_train_loss,participants\n";
  for (const EvalRecord& r : records) {
    out << r.round << ',' << format_double(r.map) << ',' << format_double(r.cf1) << ','
        << format_double(r.of1) << ',' << format_double(r.mean_train_loss) << ',';
    for (std::size_t i = 0; i < r.participants.size(); ++i) {
      out << (i ? ";" : "") << r.participants[i];
    }
    out << '\n';
  }
  return out.str();
}

nlohmann::ordered_json records_to_json(const std::vector<EvalRecord>& records) {
  auto out = nlohmann::ordered_json::array();
  for (const EvalRecord& r : records) {
    nlohmann::ordered_json rec;
    rec["round"] = r.round;
    rec["mAP"] = r.map;
    rec["CF1"] = r.cf1;
    rec["OF1"] = r.of1;
    rec["mean_train_loss"] = r.mean_train_loss;
    rec["participants"] = r.participants;
    out.push_back(std::move(rec));
  }
  return out;
}

void write_report(const std::filesystem::path& dir, const RunReport& report,
                  const ParameterBundle& bundle) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json doc;
  doc["config"] = config_to_json(report.config);
  doc["shard_sizes"] = report.shard_sizes;
  doc["records"] = records_to_json(report.records);
  auto timings = nlohmann::ordered_json::array();
  for (const EvalRecord& r : report.records) {
    timings.push_back({{"round", r.round}, {"seconds", r.seconds}});
  }
  doc["timings"] = std::move(timings);
  doc["bundle"] = report.bundle_file;

  std::ofstream(dir / "report.json") << doc.dump(2) << '\n';
  std::ofstream(dir / "metrics.csv") << metrics_csv(report.records);
  std::ofstream(dir / report.bundle_file) << bundle_to_json(bundle);
}

RunReport read_report(const std::filesystem::path& report_json) {
  std::ifstream in(report_json);
  if (!in) throw ContractError("cannot read report " + report_json.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ContractError("report " + report_json.string() + " is not valid JSON: " + e.what());
  }
  RunReport out;
  try {
    out.config = config_from_json(doc.at("config"));
    out.shard_sizes = doc.at("shard_sizes").get<std::vector<std::size_t>>();
    out.bundle_file = doc.at("bundle").get<std::string>();
    for (const auto& rec : doc.at("records")) {
      EvalRecord r;
      r.round = rec.at("round").get<std::size_t>();
      r.map = rec.at("mAP").get<double>();
      r.cf1 = rec.at("CF1").get<double>();
      r.of1 = rec.at("OF1").get<double>();
      r.mean_train_loss = rec.at("mean_train_loss").get<double>();
      r.participants = rec.at("participants").get<std::vector<std::size_t>>();
      out.records.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ContractError("malformed report " + report_json.string() + ": " + e.what());
  }
  return out;
}

Comparison compare_reports(const RunReport& a, const RunReport& b) {
  if (a.records.size() != b.records.size()) {
    throw ContractError("reports have different eval schedules (" +
                        std::to_string(a.records.size()) + " vs " +
                        std::to_string(b.records.size()) + " records)");
  }
  if (a.records.empty()) throw ContractError("reports contain no records");
  Comparison out;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    const EvalRecord& ra = a.records[i];
    const EvalRecord& rb = b.records[i];
    if (ra.round != rb.round) {
      throw ContractError("reports have different eval schedules at record " +
                          std::to_string(i));
    }
    out.rows.push_back(CompareRow{ra.round, ra.map, rb.map, rb.map - ra.map, rb.cf1 - ra.cf1,
                                  rb.of1 - ra.of1});
  }
  out.slope_a = a.records.back().map - a.records.front().map;
  out.slope_b = b.records.back().map - b.records.front().map;
  return out;
}

std::string comparison_csv(const Comparison& cmp) {
  std::ostringstream out;
  out << "round,mAP_a,mAP_b,delta_mAP,delta_CF1,delta_OF1\n";
  for (const CompareRow& r : cmp.rows) {
    out << r.round << ',' << format_double(r.map_a) << ',' << format_double(r.map_b) << ','
        << format_double(r.d_map) << ',' << format_double(r.d_cf1) << ','
        << format_double(r.d_of1) << '\n';
  }
  return out.str();
}

nlohmann::ordered_json comparison_to_json(const Comparison& cmp) {
  nlohmann::ordered_json doc;
  auto rows = nlohmann::ordered_json::array();
  for (const CompareRow& r : cmp.rows) {
    rows.push_back({{"round", r.round},
                    {"mAP_a", r.map_a},
                    {"mAP_b", r.map_b},
                    {"delta_mAP", r.d_map},
                    {"delta_CF1", r.d_cf1},
                    {"delta_OF1", r.d_of1}});
  }
  doc["rows"] = std::move(rows);
  doc["degradation_slope_a"] = cmp.slope_a;
  doc["degradation_slope_b"] = cmp.slope_b;
  return doc;
}

}  // namespace fedmpt
