#include "fedmpt/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

#include <json.hpp>

#include "fedmpt/error.hpp"
#include "fedmpt/rng.hpp"

namespace fedmpt {

namespace {

double squared_distance(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

std::size_t nearest(const Tensor& p, const std::vector<Tensor>& centers) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centers.size(); ++c) {
    const double d = squared_distance(p, centers[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

}  // namespace

void GeneratorSpec::validate() const {
  if (classes == 0 || input_dim == 0) throw ParameterError("generator needs classes and input_dim");
  if (spurious_strength < 0.0 || spurious_strength > 1.0) {
    throw ParameterError("spurious_strength must lie in [0, 1]");
  }
  if (base_rate < 0.0 || base_rate > 1.0) throw ParameterError("base_rate must lie in [0, 1]");
  if (noise_std < 0.0) throw ParameterError("noise_std must be non-negative");
  if (base_cooccurrence.size() == 0) return;
  if (base_cooccurrence.shape() != Shape{classes, classes}) {
    throw DimensionError("base_cooccurrence must be " + std::to_string(classes) + "x" +
                         std::to_string(classes));
  }
  for (std::size_t i = 0; i < classes; ++i) {
    if (base_cooccurrence.at(i, i) != 1.0) {
      throw ParameterError("base_cooccurrence diagonal must be 1");
    }
    for (std::size_t j = 0; j < classes; ++j) {
      const double v = base_cooccurrence.at(i, j);
      if (v < 0.0 || v > 1.0 || v != base_cooccurrence.at(j, i)) {
        throw ParameterError("base_cooccurrence must be symmetric with entries in [0, 1]");
      }
    }
  }
}

Tensor default_cooccurrence(std::size_t classes) {
  Tensor t = Tensor::identity(classes);
  if (classes < 3) return t;
  for (std::size_t i = 0; i < classes; ++i) {
    const std::size_t j = (i + 1) % classes;
    t.at(i, j) = 0.2;
    t.at(j, i) = 0.2;
  }
  return t;
}

std::pair<std::size_t, std::size_t> designated_pair(std::size_t context, std::size_t classes) {
  if (classes < 2) return {0, 0};
  return {(2 * context) % classes, (2 * context + 1) % classes};
}

Dataset generate(const GeneratorSpec& spec, std::vector<std::size_t>* contexts) {
  spec.validate();
  const std::size_t c_count = spec.classes;
  const Tensor coupling =
      spec.base_cooccurrence.size() ? spec.base_cooccurrence : default_cooccurrence(c_count);

  Rng world(mix_seed(spec.world_seed, 0x776f726c64ULL));
  const double unit = 1.0 / std::sqrt(static_cast<double>(spec.input_dim));
  std::vector<Tensor> prototypes(c_count, Tensor({spec.input_dim}));
  for (Tensor& p : prototypes) {
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = world.normal(0.0, unit);
  }
  std::vector<Tensor> context_vectors(spec.contexts(), Tensor({spec.input_dim}));
  for (Tensor& v : context_vectors) {
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = world.normal(0.0, unit * spec.context_scale);
  }

  Rng rng(mix_seed(spec.seed, 0x73616d706c65ULL));
  Dataset out;
  out.reserve(spec.samples);
  if (contexts) contexts->clear();
  std::vector<bool> active(c_count);
  for (std::size_t s = 0; s < spec.samples; ++s) {
    const std::size_t q = rng.below(spec.contexts());
    for (std::size_t c = 0; c < c_count; ++c) active[c] = rng.bernoulli(spec.base_rate);
    for (std::size_t i = 0; i < c_count; ++i) {
      for (std::size_t j = i + 1; j < c_count; ++j) {
        const double k = coupling.at(i, j);
        if (k > 0.0 && active[i] != active[j] && rng.bernoulli(k)) {
          active[i] = active[j] = true;
        }
      }
    }
    if (rng.bernoulli(spec.spurious_strength)) {
      const auto [first, second] = designated_pair(q, c_count);
      active[first] = active[second] = true;
    }

    Sample sample;
    sample.id = s;
    sample.x = Tensor({spec.input_dim});
    sample.y.assign(c_count, Label::kNegative);
    for (std::size_t c = 0; c < c_count; ++c) {
      if (!active[c]) continue;
      sample.y[c] = Label::kPositive;
      for (std::size_t i = 0; i < spec.input_dim; ++i) sample.x[i] += prototypes[c][i];
    }
    for (std::size_t i = 0; i < spec.input_dim; ++i) {
      sample.x[i] += context_vectors[q][i] + rng.normal(0.0, spec.noise_std * unit);
    }
    out.push_back(std::move(sample));
    if (contexts) contexts->push_back(q);
  }
  return out;
}

std::size_t PartitionSpec::clusters(std::size_t classes) const {
  const double raw = std::round(t_percent * static_cast<double>(classes) / 100.0);
  return raw < 1.0 ? 1 : static_cast<std::size_t>(raw);
}

std::vector<std::size_t> kmeans(const std::vector<Tensor>& points, std::size_t k,
                                std::uint64_t seed, int max_iters) {
  if (k == 0) throw ParameterError("kmeans needs k >= 1");
  if (k > points.size()) {
    throw ParameterError("kmeans: k=" + std::to_string(k) + " exceeds " +
                         std::to_string(points.size()) + " points");
  }
  const std::size_t n = points.size();
  Rng rng(mix_seed(seed, 0x6b6d65616e73ULL));

  // k-means++ seeding.
  std::vector<Tensor> centers;
  centers.push_back(points[rng.below(n)]);
  std::vector<double> d2(n);
  while (centers.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = squared_distance(points[i], centers[nearest(points[i], centers)]);
      total += d2[i];
    }
    std::size_t pick = n - 1;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        target -= d2[i];
        if (target < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.below(n);
    }
    centers.push_back(points[pick]);
  }

  std::vector<std::size_t> assign(n, 0);
  auto recompute = [&]() {
    std::vector<Tensor> sums(k, Tensor(points.front().shape()));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      for (std::size_t d = 0; d < points[i].size(); ++d) sums[assign[i]][d] += points[i][d];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t d = 0; d < sums[c].size(); ++d) {
        centers[c][d] = sums[c][d] / static_cast<double>(counts[c]);
      }
    }
    return counts;
  };
  auto repair = [&](std::vector<std::size_t> counts) {
    for (std::size_t empty = 0; empty < k; ++empty) {
      if (counts[empty] != 0) continue;
      const std::size_t largest = static_cast<std::size_t>(
          std::max_element(counts.begin(), counts.end()) - counts.begin());
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (assign[i] != largest) continue;
        const double d = squared_distance(points[i], centers[largest]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      assign[far] = empty;
      --counts[largest];
      ++counts[empty];
      centers[empty] = points[far];
    }
    return recompute();
  };

  for (int it = 0; it < max_iters; ++it) {
    bool changed = it == 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = nearest(points[i], centers);
      if (c != assign[i]) {
        assign[i] = c;
        changed = true;
      }
    }
    repair(recompute());
    if (!changed) break;
  }
  return assign;
}

std::vector<std::vector<std::size_t>> cluster_partition(const Dataset& data,
                                                        const VisualEncoder& encoder,
                                                        std::size_t classes,
                                                        const PartitionSpec& spec) {
  const std::size_t k = spec.clusters(classes);
  if (k > data.size()) {
    throw ParameterError("partition asks for " + std::to_string(k) + " shards from " +
                         std::to_string(data.size()) + " samples");
  }
  std::vector<std::vector<std::size_t>> shards(k);
  if (k == 1) {
    for (std::size_t i = 0; i < data.size(); ++i) shards[0].push_back(i);
    return shards;
  }
  std::vector<Tensor> features;
  features.reserve(data.size());
  for (const Sample& s : data) {
    const Tensor patches = encoder.encode(s.x);
    Tensor pooled({patches.cols()});
    for (std::size_t m = 0; m < patches.rows(); ++m) {
      for (std::size_t d = 0; d < patches.cols(); ++d) pooled[d] += patches.at(m, d);
    }
    for (std::size_t d = 0; d < pooled.size(); ++d) pooled[d] /= static_cast<double>(patches.rows());
    features.push_back(std::move(pooled));
  }
  const std::vector<std::size_t> assign = kmeans(features, k, spec.seed);
  for (std::size_t i = 0; i < assign.size(); ++i) shards[assign[i]].push_back(i);
  return shards;
}

Dataset mask_annotations(Dataset data, const MaskSpec& spec) {
  if (spec.mask_percent < 0.0 || spec.mask_percent >= 100.0) {
    throw ParameterError("mask_percent must lie in [0, 100)");
  }
  if (spec.mask_percent == 0.0) return data;
  const double p = spec.mask_percent / 100.0;
  Rng rng(mix_seed(spec.seed, 0x6d61736bULL));
  for (Sample& s : data) {
    const LabelVector original = s.y;
    for (Label& l : s.y) {
      if (rng.bernoulli(p)) l = Label::kUnknown;
    }
    if (known_count(s.y) == 0 && !s.y.empty()) {
      const std::size_t keep = rng.below(s.y.size());
      s.y[keep] = original[keep];
    }
  }
  return data;
}

void write_dataset_jsonl(std::ostream& out, const Dataset& data) {
  for (const Sample& s : data) {
    nlohmann::ordered_json rec;
    rec["id"] = s.id;
    rec["x"] = s.x.values();
    nlohmann::ordered_json y = nlohmann::ordered_json::array();
    for (Label l : s.y) {
      if (l == Label::kUnknown) {
        y.push_back("?");
      } else {
        y.push_back(l == Label::kPositive ? 1 : 0);
      }
    }
    rec["y"] = std::move(y);
    out << rec.dump() << '\n';
  }
}

Dataset read_dataset_jsonl(std::istream& in) {
  Dataset out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      Sample s;
      s.id = rec.at("id").get<std::size_t>();
      const auto x = rec.at("x").get<std::vector<double>>();
      s.x = Tensor({x.size()}, x);
      for (const auto& v : rec.at("y")) {
        if (v.is_string() && v.get<std::string>() == "?") {
          s.y.push_back(Label::kUnknown);
        } else if (v.is_number_integer() && (v.get<int>() == 0 || v.get<int>() == 1)) {
          s.y.push_back(v.get<int>() ? Label::kPositive : Label::kNegative);
        } else {
          throw ContractError("label entries must be 0, 1 or \"?\"");
        }
      }
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw ContractError("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace fedmpt
