#include "fedmpt/fedsim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "fedmpt/error.hpp"
#include "fedmpt/metrics.hpp"
#include "fedmpt/rng.hpp"

namespace fedmpt {

EncodedShard encode_samples(const Dataset& data, const VisualEncoder& encoder,
                            std::span<const std::size_t> indices) {
  EncodedShard out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    const Sample& s = data.at(i);
    out.push_back(EncodedSample{s.id, encoder.encode(s.x), s.y});
  }
  return out;
}

EncodedShard encode_samples(const Dataset& data, const VisualEncoder& encoder) {
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return encode_samples(data, encoder, all);
}

std::size_t FedConfig::participants_per_round() const {
  const double raw = std::ceil(participation * static_cast<double>(clients) - 1e-9);
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(raw, 1.0)), 1, clients);
}

void FedConfig::validate() const {
  if (clients == 0) throw ParameterError("federation needs at least one client");
  if (!(participation > 0.0 && participation <= 1.0)) {
    throw ParameterError("participation rate must lie in (0, 1]");
  }
}

LocalResult local_train(ClientState& client, std::size_t epochs, const TrainSettings& train) {
  if (!client.shard || client.shard->empty()) {
    throw ContractError("client " + std::to_string(client.client_id) + " has an empty shard");
  }
  if (train.batch == 0) throw ParameterError("batch size must be positive");
  const EncodedShard& shard = *client.shard;
  Model& model = *client.model;
  const std::vector<Parameter*> params = model.parameters();
  for (Parameter* p : params) p->zero_grad();

  double loss_total = 0.0;
  std::size_t loss_count = 0;
  std::vector<std::size_t> order(shard.size());
  std::vector<const Tensor*> patches;
  std::vector<const LabelVector*> labels;
  for (std::size_t e = 0; e < epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(client.seed, client.epochs_done));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(i)]);
    }
    for (std::size_t begin = 0; begin < order.size(); begin += train.batch) {
      const std::size_t end = std::min(order.size(), begin + train.batch);
      patches.clear();
      labels.clear();
      for (std::size_t k = begin; k < end; ++k) {
        patches.push_back(&shard[order[k]].patches);
        labels.push_back(&shard[order[k]].y);
      }
      Tape tape;
      Var loss = model.batch_loss(tape, patches, labels, train.asl);
      loss_total += loss.value()[0];
      ++loss_count;
      tape.backward(loss);
      sgd_step(params, train.lr);
    }
    ++client.epochs_done;
  }
  LocalResult out;
  out.bundle = extract_bundle(model);
  out.mean_loss = loss_count ? loss_total / static_cast<double>(loss_count) : 0.0;
  return out;
}

std::vector<std::size_t> sample_participants(const FedConfig& cfg, std::size_t round_idx) {
  cfg.validate();
  const std::size_t take = cfg.participants_per_round();
  std::vector<std::size_t> ids(cfg.clients);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  if (take == cfg.clients) return ids;
  Rng rng(mix_seed(cfg.seed, round_idx));
  for (std::size_t i = 0; i < take; ++i) {
    std::swap(ids[i], ids[i + rng.below(ids.size() - i)]);
  }
  ids.resize(take);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<double> aggregation_weights(const FedConfig& cfg,
                                        std::span<const ClientState> clients,
                                        std::span<const std::size_t> participants) {
  std::vector<double> w(participants.size());
  if (cfg.weighting == Weighting::kUniform) {
    std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(participants.size()));
    return w;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < participants.size(); ++i) {
    w[i] = static_cast<double>(clients[participants[i]].shard->size());
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

RoundRecord run_round(Server& server, std::span<ClientState> clients, const FedConfig& cfg,
                      const TrainSettings& train, std::size_t round_idx) {
  if (round_idx >= cfg.rounds) {
    throw ContractError("round " + std::to_string(round_idx) + " beyond schedule of " +
                        std::to_string(cfg.rounds));
  }
  if (clients.size() != cfg.clients) {
    throw ContractError("federation configured for " + std::to_string(cfg.clients) +
                        " clients, got " + std::to_string(clients.size()));
  }
  RoundRecord record;
  record.round = round_idx + 1;
  record.participants = sample_participants(cfg, round_idx);

  std::vector<ParameterBundle> returned;
  returned.reserve(record.participants.size());
  double loss_total = 0.0;
  for (std::size_t id : record.participants) {
    ClientState& client = clients[id];
    load_bundle(*client.model, server.global);
    LocalResult local = local_train(client, train.local_epochs, train);
    loss_total += local.mean_loss;
    returned.push_back(std::move(local.bundle));
  }
  const std::vector<double> weights = aggregation_weights(cfg, clients, record.participants);
  server.global = fed_average(returned, weights);
  for (ClientState& client : clients) load_bundle(*client.model, server.global);
  record.mean_train_loss = loss_total / static_cast<double>(record.participants.size());
  return record;
}

EvalMetrics evaluate(Model& model, const EncodedShard& eval_set, double threshold) {
  std::vector<const Tensor*> patches;
  std::vector<LabelVector> labels;
  patches.reserve(eval_set.size());
  labels.reserve(eval_set.size());
  for (const EncodedSample& s : eval_set) {
    patches.push_back(&s.patches);
    labels.push_back(s.y);
  }
  const Tensor scores = model.predict(patches);
  const F1Scores f1 = f1_scores(scores, labels, threshold);
  return EvalMetrics{mean_average_precision(scores, labels), f1.cf1, f1.of1};
}

std::vector<EvalRecord> run_experiment(Server& server, std::span<ClientState> clients,
                                       const FedConfig& cfg, const TrainSettings& train,
                                       Model& eval_model, const EncodedShard& eval_set,
                                       std::size_t eval_interval,
                                       const std::function<void(const EvalRecord&)>& on_eval) {
  cfg.validate();
  if (eval_interval == 0) throw ParameterError("eval_interval must be positive");
  std::vector<EvalRecord> records;
  auto eval_at = [&](EvalRecord rec) {
    load_bundle(eval_model, server.global);
    const EvalMetrics m = evaluate(eval_model, eval_set);
    rec.map = m.map;
    rec.cf1 = m.cf1;
    rec.of1 = m.of1;
    records.push_back(rec);
    if (on_eval) on_eval(records.back());
  };
  eval_at(EvalRecord{});
  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    const auto start = std::chrono::steady_clock::now();
    RoundRecord round = run_round(server, clients, cfg, train, r);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (round.round % eval_interval == 0 || round.round == cfg.rounds) {
      EvalRecord rec;
      rec.round = round.round;
      rec.mean_train_loss = round.mean_train_loss;
      rec.participants = round.participants;
      rec.seconds = seconds;
      eval_at(rec);
    }
  }
  return records;
}

}  // namespace fedmpt
