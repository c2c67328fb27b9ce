#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "fedmpt/bundle.hpp"
#include "fedmpt/datagen.hpp"
#include "fedmpt/model.hpp"

namespace fedmpt {

// A sample after the frozen visual encoder. Clients train on these.
struct EncodedSample {
  std::size_t id = 0;
  Tensor patches;  // M x D
  LabelVector y;
};
using EncodedShard = std::vector<EncodedSample>;

EncodedShard encode_samples(const Dataset& data, const VisualEncoder& encoder,
                            std::span<const std::size_t> indices);
EncodedShard encode_samples(const Dataset& data, const VisualEncoder& encoder);

struct TrainSettings {
  double lr = 0.001;
  std::size_t batch = 32;
  std::size_t local_epochs = 1;
  AslConfig asl;
};

enum class Weighting { kUniform, kSizeWeighted };

struct FedConfig {
  std::size_t clients = 1;     // K
  std::size_t rounds = 1;      // phi
  double participation = 1.0;  // epsilon
  Weighting weighting = Weighting::kUniform;
  std::uint64_t seed = 0;

  // ceil(epsilon * K), at least one.
  std::size_t participants_per_round() const;
  void validate() const;
};

struct ClientState {
  std::size_t client_id = 0;
  std::shared_ptr<const EncodedShard> shard;
  std::unique_ptr<Model> model;
  // Drives mini-batch shuffling; epochs_done advances it.
  std::uint64_t seed = 0;
  std::size_t epochs_done = 0;
};

struct LocalResult {
  ParameterBundle bundle;
  double mean_loss = 0.0;
};

// Runs `epochs` passes of shuffled mini-batch SGD on the client's shard and
// returns the updated bundle.
LocalResult local_train(ClientState& client, std::size_t epochs, const TrainSettings& train);

struct Server {
  ParameterBundle global;
};

struct RoundRecord {
  std::size_t round = 0;
  std::vector<std::size_t> participants;
  double mean_train_loss = 0.0;
};

// Participants for a round: ceil(epsilon K) distinct client ids, ascending.
std::vector<std::size_t> sample_participants(const FedConfig& cfg, std::size_t round_idx);

// Aggregation weights for the given participants.
std::vector<double> aggregation_weights(const FedConfig& cfg,
                                        std::span<const ClientState> clients,
                                        std::span<const std::size_t> participants);

RoundRecord run_round(Server& server, std::span<ClientState> clients, const FedConfig& cfg,
                      const TrainSettings& train, std::size_t round_idx);

struct EvalRecord {
  std::size_t round = 0;
  double map = 0.0;
  double cf1 = 0.0;
  double of1 = 0.0;
  double mean_train_loss = 0.0;
  std::vector<std::size_t> participants;
  double seconds = 0.0;  // wall clock of the round; not part of metric equality
};

struct EvalMetrics {
  double map = 0.0;
  double cf1 = 0.0;
  double of1 = 0.0;
};

EvalMetrics evaluate(Model& model, const EncodedShard& eval_set, double threshold = 0.5);

// Evaluates after round 0 (initialisation), then every `eval_interval`
// rounds. The server bundle holds the final global parameters.
std::vector<EvalRecord> run_experiment(Server& server, std::span<ClientState> clients,
                                       const FedConfig& cfg, const TrainSettings& train,
                                       Model& eval_model, const EncodedShard& eval_set,
                                       std::size_t eval_interval,
                                       const std::function<void(const EvalRecord&)>& on_eval = {});

}  // namespace fedmpt
