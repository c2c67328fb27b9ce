#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "fedmpt/datagen.hpp"
#include "fedmpt/error.hpp"

using namespace fedmpt;

namespace {

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// Mean pairwise L2 distance between per-shard positive-rate vectors.
double label_spread(const Dataset& data, const std::vector<std::vector<std::size_t>>& shards,
                    std::size_t classes) {
  std::vector<std::vector<double>> freq;
  for (const auto& shard : shards) {
    std::vector<double> f(classes, 0.0);
    for (std::size_t i : shard) {
      for (std::size_t c = 0; c < classes; ++c) f[c] += data[i].y[c] == Label::kPositive;
    }
    for (double& v : f) v /= static_cast<double>(shard.size());
    freq.push_back(std::move(f));
  }
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < freq.size(); ++i) {
    for (std::size_t j = i + 1; j < freq.size(); ++j) {
      double d = 0.0;
      for (std::size_t c = 0; c < classes; ++c) d += std::pow(freq[i][c] - freq[j][c], 2);
      total += std::sqrt(d);
      ++pairs;
    }
  }
  return pairs ? total / static_cast<double>(pairs) : 0.0;
}

Dataset all_known(std::size_t samples, std::size_t classes) {
  Dataset d(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    d[i].id = i;
    d[i].x = Tensor::vector({static_cast<double>(i)});
    for (std::size_t c = 0; c < classes; ++c) {
      d[i].y.push_back((i + c) % 3 == 0 ? Label::kPositive : Label::kNegative);
    }
  }
  return d;
}

}  // namespace

TEST_CASE("without injection a context is uncorrelated with its pair") {
  GeneratorSpec spec;
  spec.samples = 10000;
  spec.spurious_strength = 0.0;
  spec.seed = 1;
  std::vector<std::size_t> ctx;
  const Dataset data = generate(spec, &ctx);
  REQUIRE(ctx.size() == data.size());
  const double sigma = 1.0 / std::sqrt(static_cast<double>(data.size()));
  for (std::size_t q = 0; q < spec.contexts(); ++q) {
    const auto [a, b] = designated_pair(q, spec.classes);
    std::vector<double> in_q, ya, yb;
    for (std::size_t i = 0; i < data.size(); ++i) {
      in_q.push_back(ctx[i] == q);
      ya.push_back(data[i].y[a] == Label::kPositive);
      yb.push_back(data[i].y[b] == Label::kPositive);
    }
    CHECK(std::abs(pearson(in_q, ya)) <= 3.0 * sigma);
    CHECK(std::abs(pearson(in_q, yb)) <= 3.0 * sigma);
  }
}

TEST_CASE("full injection switches the designated pair on") {
  GeneratorSpec spec;
  spec.samples = 500;
  spec.spurious_strength = 1.0;
  std::vector<std::size_t> ctx;
  const Dataset data = generate(spec, &ctx);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto [a, b] = designated_pair(ctx[i], spec.classes);
    CHECK(data[i].y[a] == Label::kPositive);
    CHECK(data[i].y[b] == Label::kPositive);
  }
}

TEST_CASE("generator boundaries and determinism") {
  GeneratorSpec spec;
  spec.samples = 1;
  const Dataset one = generate(spec);
  REQUIRE(one.size() == 1);
  CHECK(one[0].y.size() == spec.classes);
  CHECK(one[0].x.shape() == Shape{spec.input_dim});

  spec.samples = 50;
  spec.seed = 7;
  const Dataset a = generate(spec);
  const Dataset b = generate(spec);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].id == i);
    CHECK(a[i].x == b[i].x);
    CHECK(a[i].y == b[i].y);
  }
  spec.seed = 8;
  CHECK(generate(spec)[0].x != a[0].x);

  for (const auto& row : a) {
    for (Label l : row.y) CHECK(l != Label::kUnknown);
  }
}

TEST_CASE("default co-occurrence is a unit-diagonal ring") {
  const Tensor m = default_cooccurrence(5);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      const std::size_t gap = (i + 5 - j) % 5;
      const double expected = i == j ? 1.0 : (gap == 1 || gap == 4) ? 0.2 : 0.0;
      CHECK(m.at(i, j) == expected);
    }
  }
}

TEST_CASE("generator rejects bad specs") {
  GeneratorSpec spec;
  spec.spurious_strength = 1.5;
  CHECK_THROWS_AS(generate(spec), ParameterError);
  spec = GeneratorSpec{};
  spec.base_cooccurrence = Tensor({3, 3}, 0.0);
  CHECK_THROWS_AS(generate(spec), DimensionError);
  spec = GeneratorSpec{};
  spec.classes = 2;
  spec.base_cooccurrence = Tensor::matrix({{1.0, 0.3}, {0.1, 1.0}});
  CHECK_THROWS_AS(generate(spec), ParameterError);
  spec.base_cooccurrence = Tensor::matrix({{0.9, 0.3}, {0.3, 1.0}});
  CHECK_THROWS_AS(generate(spec), ParameterError);
}

TEST_CASE("k-means recovers two separated blobs") {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<Tensor> points;
  std::vector<std::size_t> truth;
  for (std::size_t i = 0; i < 400; ++i) {
    const double centre = i % 2 ? 10.0 : -10.0;
    points.push_back(Tensor::vector({centre + noise(gen), noise(gen), noise(gen)}));
    truth.push_back(i % 2);
  }
  const auto assign = kmeans(points, 2, 5);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < points.size(); ++i) agree += assign[i] == truth[i];
  const std::size_t best = std::max(agree, points.size() - agree);
  CHECK(static_cast<double>(best) >= 0.99 * static_cast<double>(points.size()));

  CHECK_THROWS_AS(kmeans(points, 0, 1), ParameterError);
  CHECK_THROWS_AS(kmeans(std::vector<Tensor>(points.begin(), points.begin() + 3), 4, 1),
                  ParameterError);
}

TEST_CASE("k-means never leaves a cluster empty") {
  // Duplicates force the repair path.
  std::vector<Tensor> points(6, Tensor::vector({1.0, 1.0}));
  points.push_back(Tensor::vector({5.0, 5.0}));
  const auto assign = kmeans(points, 4, 2);
  std::set<std::size_t> used(assign.begin(), assign.end());
  CHECK(used.size() == 4);
}

TEST_CASE("cluster partition is exact") {
  GeneratorSpec spec;
  spec.samples = 300;
  const Dataset data = generate(spec);
  const VisualEncoder enc(1, spec.input_dim, 4, 8);

  PartitionSpec part;
  CHECK(part.clusters(12) == 1);
  part.t_percent = 50.0;
  CHECK(part.clusters(12) == 6);
  part.t_percent = 100.0;
  CHECK(part.clusters(12) == 12);
  part.t_percent = 1.0;
  CHECK(part.clusters(12) == 1);

  part.t_percent = 10.0;
  const auto whole = cluster_partition(data, enc, 12, part);
  REQUIRE(whole.size() == 1);
  CHECK(whole[0].size() == data.size());

  for (double t : {25.0, 50.0, 100.0}) {
    part.t_percent = t;
    const auto shards = cluster_partition(data, enc, 12, part);
    CHECK(shards.size() == part.clusters(12));
    std::set<std::size_t> seen;
    std::size_t total = 0;
    for (const auto& s : shards) {
      CHECK(!s.empty());
      total += s.size();
      seen.insert(s.begin(), s.end());
    }
    CHECK(total == data.size());
    CHECK(seen.size() == data.size());
  }

  spec.samples = 5;
  part.t_percent = 100.0;
  CHECK_THROWS_AS(cluster_partition(generate(spec), enc, 12, part), ParameterError);
}

TEST_CASE("more shards spread label statistics further") {
  const std::vector<double> ts{10.0, 25.0, 50.0, 100.0};
  std::vector<double> spread(ts.size(), 0.0);
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    GeneratorSpec spec;
    spec.world_seed = seed;
    spec.seed = seed + 100;
    const Dataset data = generate(spec);
    const VisualEncoder enc(seed, spec.input_dim, 16, 32);
    for (std::size_t i = 0; i < ts.size(); ++i) {
      PartitionSpec part{ts[i], seed};
      spread[i] += label_spread(data, cluster_partition(data, enc, spec.classes, part),
                                spec.classes);
    }
  }
  for (std::size_t i = 1; i < ts.size(); ++i) {
    INFO("t=" << ts[i]);
    CHECK(spread[i] >= spread[i - 1]);
  }
}

TEST_CASE("masking rate, repair and known values") {
  const Dataset data = all_known(50000, 20);
  CHECK(mask_annotations(data, MaskSpec{0.0, 1})[123].y == data[123].y);

  const Dataset masked = mask_annotations(data, MaskSpec{50.0, 2});
  std::size_t hidden = 0, entries = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::size_t known = 0;
    for (std::size_t c = 0; c < 20; ++c) {
      ++entries;
      if (masked[i].y[c] == Label::kUnknown) {
        ++hidden;
      } else {
        ++known;
        CHECK(masked[i].y[c] == data[i].y[c]);
      }
    }
    CHECK(known >= 1);
    CHECK(masked[i].x == data[i].x);
  }
  REQUIRE(entries == 1000000);
  const double sigma = std::sqrt(0.25 / static_cast<double>(entries));
  CHECK(std::abs(static_cast<double>(hidden) / static_cast<double>(entries) - 0.5) <= 3.0 * sigma);

  // A single class is always restored.
  const Dataset narrow = mask_annotations(all_known(200, 1), MaskSpec{90.0, 3});
  for (const auto& s : narrow) CHECK(s.y[0] != Label::kUnknown);

  CHECK(mask_annotations(data, MaskSpec{30.0, 4})[7].y ==
        mask_annotations(data, MaskSpec{30.0, 4})[7].y);
  CHECK_THROWS_AS(mask_annotations(data, MaskSpec{100.0, 1}), ParameterError);
  CHECK_THROWS_AS(mask_annotations(data, MaskSpec{-1.0, 1}), ParameterError);
}

TEST_CASE("jsonl round trip") {
  GeneratorSpec spec;
  spec.samples = 20;
  const Dataset data = mask_annotations(generate(spec), MaskSpec{40.0, 1});
  std::stringstream io;
  write_dataset_jsonl(io, data);
  const Dataset back = read_dataset_jsonl(io);
  REQUIRE(back.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(back[i].id == data[i].id);
    CHECK(back[i].x == data[i].x);
    CHECK(back[i].y == data[i].y);
  }

  std::stringstream bad(R"({"id":0,"x":[1.0],"y":[2]})");
  CHECK_THROWS_AS(read_dataset_jsonl(bad), ContractError);
  std::stringstream broken("{not json\n");
  CHECK_THROWS_AS(read_dataset_jsonl(broken), ContractError);
}
