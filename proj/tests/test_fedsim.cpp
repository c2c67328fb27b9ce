#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fedmpt/datagen.hpp"
#include "fedmpt/error.hpp"
#include "fedmpt/fedsim.hpp"

using namespace fedmpt;

namespace {

struct World {
  std::shared_ptr<const Encoders> encoders;
  EncodedShard train;
  EncodedShard eval;
  std::unique_ptr<Model> prototype;
};

World small_world(std::size_t samples = 24) {
  World w;
  w.encoders = std::make_shared<const Encoders>(
      Encoders{VisualEncoder(1, 8, 3, 6), TextEncoder(2, 6, 6)});
  GeneratorSpec gen;
  gen.classes = 4;
  gen.input_dim = 8;
  gen.samples = samples;
  gen.world_seed = 3;
  gen.seed = 4;
  w.train = encode_samples(generate(gen), w.encoders->visual);
  gen.seed = 5;
  gen.samples = 16;
  w.eval = encode_samples(generate(gen), w.encoders->visual);
  FedMptSettings s;
  s.classes = {"a", "b", "c", "d"};
  s.conditions = {"x", "y"};
  s.beta_cond = 2;
  s.beta_cls = 2;
  s.rank = 4;
  s.transport.logit_scale = 10.0;
  s.seed = 6;
  w.prototype = std::make_unique<FedMptModel>(w.encoders, s);
  return w;
}

TrainSettings fast_train() {
  TrainSettings t;
  t.lr = 0.05;
  t.batch = 8;
  return t;
}

ClientState make_client(const World& w, std::size_t id, EncodedShard shard, std::uint64_t seed) {
  ClientState c;
  c.client_id = id;
  c.shard = std::make_shared<const EncodedShard>(std::move(shard));
  c.model = w.prototype->clone();
  c.seed = seed;
  return c;
}

EncodedShard slice(const EncodedShard& all, std::size_t begin, std::size_t end) {
  return EncodedShard(all.begin() + static_cast<std::ptrdiff_t>(begin),
                      all.begin() + static_cast<std::ptrdiff_t>(end));
}

double max_abs_diff(const ParameterBundle& a, const ParameterBundle& b) {
  double worst = 0.0;
  for (const auto& [name, t] : a.entries) {
    const Tensor& u = b.entries.at(name);
    for (std::size_t i = 0; i < t.size(); ++i) worst = std::max(worst, std::abs(t[i] - u[i]));
  }
  return worst;
}

}  // namespace

TEST_CASE("participants per round") {
  FedConfig cfg;
  cfg.clients = 4;
  cfg.participation = 0.5;
  CHECK(cfg.participants_per_round() == 2);
  cfg.participation = 0.3;
  CHECK(cfg.participants_per_round() == 2);
  cfg.participation = 0.01;
  CHECK(cfg.participants_per_round() == 1);
  cfg.participation = 1.0;
  CHECK(cfg.participants_per_round() == 4);
  cfg.clients = 10;
  cfg.participation = 0.3;
  CHECK(cfg.participants_per_round() == 3);

  cfg.participation = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
  cfg.participation = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
  cfg.participation = 1.0;
  cfg.clients = 0;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
}

TEST_CASE("sampling draws distinct ids at the configured rate") {
  FedConfig cfg;
  cfg.clients = 4;
  cfg.participation = 0.5;
  cfg.seed = 11;
  const std::size_t rounds = 1000;
  std::vector<std::size_t> hits(4, 0);
  for (std::size_t r = 0; r < rounds; ++r) {
    const auto ids = sample_participants(cfg, r);
    REQUIRE(ids.size() == 2);
    CHECK(ids[0] < ids[1]);
    for (std::size_t id : ids) ++hits[id];
  }
  const double sigma = std::sqrt(rounds * 0.5 * 0.5);
  for (std::size_t h : hits) CHECK(std::abs(static_cast<double>(h) - 500.0) <= 3.0 * sigma);

  cfg.participation = 1.0;
  CHECK(sample_participants(cfg, 7) == std::vector<std::size_t>{0, 1, 2, 3});
  cfg.participation = 0.5;
  CHECK(sample_participants(cfg, 3) == sample_participants(cfg, 3));
}

TEST_CASE("aggregation weights") {
  World w = small_world();
  std::vector<ClientState> clients;
  clients.push_back(make_client(w, 0, slice(w.train, 0, 2), 1));
  clients.push_back(make_client(w, 1, slice(w.train, 2, 8), 2));
  clients.push_back(make_client(w, 2, slice(w.train, 8, 24), 3));
  FedConfig cfg;
  cfg.clients = 3;
  const std::vector<std::size_t> ids{0, 2};
  CHECK(aggregation_weights(cfg, clients, ids) == std::vector<double>{0.5, 0.5});
  cfg.weighting = Weighting::kSizeWeighted;
  const auto sized = aggregation_weights(cfg, clients, ids);
  CHECK(sized[0] == doctest::Approx(2.0 / 18.0).epsilon(1e-15));
  CHECK(sized[1] == doctest::Approx(16.0 / 18.0).epsilon(1e-15));
}

TEST_CASE("local training contracts") {
  World w = small_world();
  ClientState c = make_client(w, 0, w.train, 1);
  const ParameterBundle before = extract_bundle(*c.model);
  CHECK(local_train(c, 0, fast_train()).bundle == before);

  ClientState empty = make_client(w, 1, {}, 1);
  CHECK_THROWS_AS(local_train(empty, 1, fast_train()), ContractError);

  const ParameterBundle out = local_train(c, 1, fast_train()).bundle;
  CHECK(out.entries.size() == before.entries.size());
  for (const auto& [name, _] : out.entries) {
    CHECK(name.find("encoder") == std::string::npos);
  }
}

TEST_CASE("one small step on one sample lowers its loss") {
  World w = small_world();
  ClientState c = make_client(w, 0, slice(w.train, 0, 1), 1);
  TrainSettings t = fast_train();
  t.lr = 1e-3;
  const Tensor* x[] = {&(*c.shard)[0].patches};
  const LabelVector* y[] = {&(*c.shard)[0].y};
  auto loss_now = [&] {
    Tape tape;
    return c.model->batch_loss(tape, x, y, t.asl).value()[0];
  };
  const double before = loss_now();
  local_train(c, 1, t);
  CHECK(loss_now() <= before);
}

TEST_CASE("local training is deterministic") {
  World w = small_world();
  ClientState a = make_client(w, 0, w.train, 9);
  ClientState b = make_client(w, 0, w.train, 9);
  CHECK(local_train(a, 2, fast_train()).bundle == local_train(b, 2, fast_train()).bundle);
}

TEST_CASE("one client federation equals centralised training") {
  World w = small_world();
  std::vector<ClientState> clients;
  clients.push_back(make_client(w, 0, w.train, 21));
  ClientState central = make_client(w, 0, w.train, 21);

  FedConfig cfg;
  cfg.clients = 1;
  cfg.rounds = 6;
  Server server{extract_bundle(*w.prototype)};
  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    run_round(server, clients, cfg, fast_train(), r);
    const ParameterBundle step = local_train(central, 1, fast_train()).bundle;
    CHECK(server.global == step);
  }
}

TEST_CASE("identical shards keep every client on the global bundle") {
  World w = small_world();
  std::vector<ClientState> clients;
  for (std::size_t k = 0; k < 3; ++k) clients.push_back(make_client(w, k, w.train, 5));
  FedConfig cfg;
  cfg.clients = 3;
  cfg.rounds = 4;
  Server server{extract_bundle(*w.prototype)};
  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    run_round(server, clients, cfg, fast_train(), r);
    for (auto& c : clients) CHECK(extract_bundle(*c.model) == server.global);
  }

  // The average of identical updates equals one update.
  std::vector<ClientState> fresh;
  for (std::size_t k = 0; k < 3; ++k) fresh.push_back(make_client(w, k, w.train, 5));
  ClientState one = make_client(w, 0, w.train, 5);
  Server s2{extract_bundle(*w.prototype)};
  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    run_round(s2, fresh, cfg, fast_train(), r);
    const ParameterBundle ref = local_train(one, 1, fast_train()).bundle;
    CHECK(max_abs_diff(s2.global, ref) <= 1e-12);
    load_bundle(*one.model, s2.global);
  }
}

TEST_CASE("non-participants receive the new global bundle") {
  World w = small_world();
  std::vector<ClientState> clients;
  for (std::size_t k = 0; k < 4; ++k) {
    clients.push_back(make_client(w, k, slice(w.train, 6 * k, 6 * k + 6), k));
  }
  FedConfig cfg;
  cfg.clients = 4;
  cfg.rounds = 3;
  cfg.participation = 0.25;
  cfg.seed = 2;
  Server server{extract_bundle(*w.prototype)};
  std::vector<std::size_t> before(4);
  for (std::size_t k = 0; k < 4; ++k) before[k] = clients[k].epochs_done;
  const RoundRecord rec = run_round(server, clients, cfg, fast_train(), 0);
  REQUIRE(rec.participants.size() == 1);
  CHECK(rec.round == 1);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(extract_bundle(*clients[k].model) == server.global);
    const bool took_part = k == rec.participants[0];
    CHECK(clients[k].epochs_done == before[k] + (took_part ? 1 : 0));
  }
  CHECK_THROWS_AS(run_round(server, clients, cfg, fast_train(), 3), ContractError);
  CHECK_THROWS_AS(run_round(server, std::span<ClientState>(clients).first(3), cfg, fast_train(), 1),
                  ContractError);
}

TEST_CASE("experiment schedule and evaluation points") {
  World w = small_world();
  auto run = [&](std::size_t rounds, std::size_t interval) {
    std::vector<ClientState> clients;
    clients.push_back(make_client(w, 0, slice(w.train, 0, 12), 1));
    clients.push_back(make_client(w, 1, slice(w.train, 12, 24), 2));
    FedConfig cfg;
    cfg.clients = 2;
    cfg.rounds = rounds;
    Server server{extract_bundle(*w.prototype)};
    auto eval_model = w.prototype->clone();
    std::size_t callbacks = 0;
    auto recs = run_experiment(server, clients, cfg, fast_train(), *eval_model, w.eval, interval,
                               [&](const EvalRecord&) { ++callbacks; });
    CHECK(callbacks == recs.size());
    return std::make_pair(recs, server.global);
  };

  const auto [empty, init] = run(0, 1);
  REQUIRE(empty.size() == 1);
  CHECK(empty[0].round == 0);
  CHECK(init == extract_bundle(*w.prototype));

  const auto [sparse, _] = run(5, 2);
  std::vector<std::size_t> rounds;
  for (const auto& r : sparse) rounds.push_back(r.round);
  CHECK(rounds == std::vector<std::size_t>{0, 2, 4, 5});
  for (const auto& r : sparse) {
    CHECK(r.map >= 0.0);
    CHECK(r.map <= 1.0);
  }

  const auto [a, ga] = run(3, 1);
  const auto [b, gb] = run(3, 1);
  CHECK(ga == gb);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].map == b[i].map);
    CHECK(a[i].cf1 == b[i].cf1);
    CHECK(a[i].of1 == b[i].of1);
    CHECK(a[i].mean_train_loss == b[i].mean_train_loss);
  }
}
