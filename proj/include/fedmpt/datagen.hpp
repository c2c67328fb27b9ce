#pragma once

#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

#include "fedmpt/encoders.hpp"
#include "fedmpt/objective.hpp"
#include "fedmpt/tensor.hpp"

namespace fedmpt {

struct Sample {
  std::size_t id = 0;
  Tensor x;
  LabelVector y;
};
using Dataset = std::vector<Sample>;

// Synthetic multi-label world. Every sample carries one of `contexts()`
// context vectors; context q is tied to a designated class pair and, with
// probability spurious_strength, forces both classes of that pair on. The
// pair correlation therefore concentrates in whichever shards gather that
// context.
struct GeneratorSpec {
  std::size_t classes = 12;
  std::size_t input_dim = 48;
  std::size_t samples = 2400;
  // Symmetric, unit diagonal; entry (i, j) is the probability that an active
  // class switches on the other. Empty selects default_cooccurrence().
  Tensor base_cooccurrence;
  double spurious_strength = 0.8;
  double base_rate = 0.15;
  double noise_std = 0.3;
  double context_scale = 1.5;
  // Prototypes, contexts and pair designations come from world_seed; sample
  // draws from seed. Train and eval sets share a world.
  std::uint64_t world_seed = 0;
  std::uint64_t seed = 0;

  std::size_t contexts() const { return classes < 2 ? 1 : classes / 2; }
  void validate() const;
};

// Identity plus 0.2 coupling between neighbouring classes on a ring.
Tensor default_cooccurrence(std::size_t classes);

// Classes forced on by context q.
std::pair<std::size_t, std::size_t> designated_pair(std::size_t context, std::size_t classes);

// Optionally reports the context index of each sample.
Dataset generate(const GeneratorSpec& spec, std::vector<std::size_t>* contexts = nullptr);

struct PartitionSpec {
  double t_percent = 10.0;
  std::uint64_t seed = 0;

  // max(1, round(t * C / 100)).
  std::size_t clusters(std::size_t classes) const;
};

// Seeded k-means++ followed by at most `max_iters` Lloyd iterations. Empty
// clusters steal the point farthest from the centroid of the largest one.
std::vector<std::size_t> kmeans(const std::vector<Tensor>& points, std::size_t k,
                                std::uint64_t seed, int max_iters = 100);

// Clusters mean-pooled frozen patch embeddings; returns sample indices per
// shard. Shards are disjoint, nonempty and cover the dataset.
std::vector<std::vector<std::size_t>> cluster_partition(const Dataset& data,
                                                        const VisualEncoder& encoder,
                                                        std::size_t classes,
                                                        const PartitionSpec& spec);

struct MaskSpec {
  double mask_percent = 0.0;
  std::uint64_t seed = 0;
};

// Hides each (sample, class) entry with probability mask_percent / 100. A
// sample left with no known entry gets one seeded entry back.
Dataset mask_annotations(Dataset data, const MaskSpec& spec);

// One JSON record per line: {"id", "x", "y"} with y entries 0, 1 or "?".
void write_dataset_jsonl(std::ostream& out, const Dataset& data);
Dataset read_dataset_jsonl(std::istream& in);

}  // namespace fedmpt
