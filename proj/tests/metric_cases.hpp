#pragma once

// Hand-enumerated metric instances. Each comment shows the ranking or the
// confusion counts the expected value was worked out from.

#include <string>
#include <vector>

#include "fedmpt/metrics.hpp"

namespace cases {

constexpr int U = -1;  // unknown label

struct MapCase {
  std::string name;
  std::vector<std::vector<double>> scores;  // samples x classes
  std::vector<std::vector<int>> labels;
  double expected;
};

struct F1Case {
  std::string name;
  std::vector<std::vector<double>> scores;
  std::vector<std::vector<int>> labels;
  double cf1;
  double of1;
};

inline const std::vector<MapCase>& map_cases() {
  static const std::vector<MapCase> all = {
      // ranks: 0.9(-) 0.8(+) 0.7(+) -> (1/2 + 2/3) / 2
      {"worked example", {{0.9}, {0.8}, {0.7}}, {{0}, {1}, {1}}, 7.0 / 12.0},
      {"perfect ranking", {{0.9}, {0.1}}, {{1}, {0}}, 1.0},
      // positive last of four -> 1/4
      {"positive last", {{0.9}, {0.8}, {0.7}, {0.6}}, {{0}, {0}, {0}, {1}}, 0.25},
      // + - + - -> (1 + 2/3) / 2
      {"alternating", {{0.9}, {0.8}, {0.7}, {0.6}}, {{1}, {0}, {1}, {0}}, 5.0 / 6.0},
      // sorted 0.8(+) 0.4(-) 0.35(+) 0.1(-) -> (1 + 2/3) / 2
      {"unsorted input", {{0.1}, {0.4}, {0.35}, {0.8}}, {{0}, {0}, {1}, {1}}, 5.0 / 6.0},
      // all tied: index order - + - -> 1/2
      {"ties by index", {{0.5}, {0.5}, {0.5}}, {{0}, {1}, {0}}, 0.5},
      // unknown dropped: 0.8(-) 0.7(+) -> 1/2
      {"unknown skipped", {{0.9}, {0.8}, {0.7}}, {{U}, {0}, {1}}, 0.5},
      // class 0: AP 1; class 1: 0.7(+) 0.3(-) 0.1(+) -> 5/6; mean 11/12
      {"two classes",
       {{0.9, 0.1}, {0.2, 0.7}, {0.5, 0.3}},
       {{1, 1}, {0, 1}, {0, 0}},
       11.0 / 12.0},
      // class 1 has no positive and is skipped; class 0: 0.9(-) 0.2(+) -> 1/2
      {"class without positives", {{0.9, 0.3}, {0.2, 0.4}}, {{0, 0}, {1, 0}}, 0.5},
      // reversed: 0.4(-) 0.3(-) 0.2(+) 0.1(+) -> (1/3 + 2/4) / 2
      {"reversed ranking", {{0.1}, {0.2}, {0.3}, {0.4}}, {{1}, {1}, {0}, {0}}, 5.0 / 12.0},
      // 0.9(-) 0.8(+) 0.6(+) 0.3(+) 0.1(-) -> (1/2 + 2/3 + 3/4) / 3
      {"three positives",
       {{0.6}, {0.9}, {0.3}, {0.8}, {0.1}},
       {{1}, {0}, {1}, {1}, {0}},
       23.0 / 36.0},
  };
  return all;
}

inline const std::vector<F1Case>& f1_cases() {
  static const std::vector<F1Case> all = {
      // class 0: TP1 FP1 FN0 -> 2/3; class 1: TP0 FP0 FN1 -> 0; pooled 1,1,1
      {"crafted confusion", {{0.9, 0.1}, {0.8, 0.2}}, {{1, 1}, {0, 0}}, 1.0 / 3.0, 0.5},
      {"perfect", {{0.9, 0.1}, {0.2, 0.7}}, {{1, 0}, {0, 1}}, 1.0, 1.0},
      {"all negative", {{0.1, 0.2}, {0.3, 0.4}}, {{1, 0}, {0, 1}}, 0.0, 0.0},
      // one class: TP1 FN1 FP1 -> 1/2 for both
      {"single class", {{0.7}, {0.4}, {0.6}, {0.2}}, {{1}, {1}, {0}, {0}}, 0.5, 0.5},
      {"threshold inclusive", {{0.5}}, {{1}}, 1.0, 1.0},
      // c0: TP2 FN1 -> 4/5; c1: TP1 FP2 -> 1/2; c2: empty -> 0; pooled 3,2,1 -> 2/3
      {"three classes",
       {{0.9, 0.7, 0.1}, {0.6, 0.8, 0.1}, {0.2, 0.9, 0.1}},
       {{1, 0, 0}, {1, 0, 0}, {1, 1, 0}},
       1.3 / 3.0,
       2.0 / 3.0},
      // the unknown entry is ignored: TP1 only
      {"unknown ignored", {{0.9}, {0.9}}, {{1}, {U}}, 1.0, 1.0},
  };
  return all;
}

inline fedmpt::Tensor to_tensor(const std::vector<std::vector<double>>& rows) {
  fedmpt::Tensor t({rows.size(), rows.front().size()});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) t.at(i, j) = rows[i][j];
  }
  return t;
}

inline std::vector<fedmpt::LabelVector> to_labels(const std::vector<std::vector<int>>& rows) {
  std::vector<fedmpt::LabelVector> out;
  for (const auto& r : rows) {
    fedmpt::LabelVector y;
    for (int v : r) y.push_back(static_cast<fedmpt::Label>(v));
    out.push_back(std::move(y));
  }
  return out;
}

}  // namespace cases
