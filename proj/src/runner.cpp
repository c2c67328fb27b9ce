#include "fedmpt/runner.hpp"

#include <fstream>
#include <sstream>

#include "fedmpt/baseline.hpp"
#include "fedmpt/error.hpp"
#include "fedmpt/rng.hpp"

namespace fedmpt {

namespace {

// Sub-seed salts; every random stream in a run derives from cfg.seed.
enum Stream : std::uint64_t {
  kVisual = 1,
  kText,
  kTrainDraw,
  kEvalDraw,
  kPartition,
  kMask,
  kFederation,
  kInit,
  kShuffle,
};

std::uint64_t stream(const RunConfig& cfg, Stream s) { return mix_seed(cfg.seed, s); }

}  // namespace

Experiment build_experiment(const RunConfig& cfg) {
  cfg.validate();
  Experiment ex;
  ex.encoders = std::make_shared<const Encoders>(Encoders{
      VisualEncoder(stream(cfg, kVisual), cfg.generator.input_dim, cfg.encoders.patches,
                    cfg.encoders.embed_dim),
      TextEncoder(stream(cfg, kText), cfg.encoders.token_dim, cfg.encoders.embed_dim)});
  for (std::size_t c = 0; c < cfg.generator.classes; ++c) {
    ex.class_names.push_back("class_" + std::to_string(c));
  }

  GeneratorSpec gen;
  gen.classes = cfg.generator.classes;
  gen.input_dim = cfg.generator.input_dim;
  gen.base_cooccurrence = cfg.generator.base_cooccurrence;
  gen.spurious_strength = cfg.generator.spurious_strength;
  gen.base_rate = cfg.generator.base_rate;
  gen.noise_std = cfg.generator.noise_std;
  gen.context_scale = cfg.generator.context_scale;
  gen.world_seed = cfg.seed;

  gen.samples = cfg.generator.train_samples;
  gen.seed = stream(cfg, kTrainDraw);
  ex.train = generate(gen);
  gen.samples = cfg.generator.eval_samples;
  gen.seed = stream(cfg, kEvalDraw);
  ex.eval = generate(gen);

  ex.shards = cluster_partition(ex.train, ex.encoders->visual, cfg.generator.classes,
                                PartitionSpec{cfg.t_percent, stream(cfg, kPartition)});
  ex.train = mask_annotations(std::move(ex.train), MaskSpec{cfg.mask_percent, stream(cfg, kMask)});
  return ex;
}

std::unique_ptr<Model> build_model(const RunConfig& cfg, std::shared_ptr<const Encoders> encoders,
                                   const std::vector<std::string>& class_names) {
  const auto& hp = cfg.hyper;
  if (cfg.model == ModelKind::kBaseline) {
    BaselineSettings s;
    s.classes = class_names;
    s.beta = hp.baseline_beta;
    s.tau = hp.tau;
    s.logit_scale = hp.logit_scale;
    s.alpha_init = hp.alpha_init;
    s.seed = stream(cfg, kInit);
    return std::make_unique<BaselineModel>(std::move(encoders), s);
  }
  FedMptSettings s;
  s.conditions = cfg.conditions;
  s.classes = class_names;
  s.beta_cond = hp.beta_cond;
  s.beta_cls = hp.beta_cls;
  s.rank = hp.rank;
  s.alpha_init = hp.alpha_init;
  s.transport = TransportSettings{hp.tau, hp.lambda, hp.sinkhorn_max_iters, hp.sinkhorn_tol,
                                  hp.logit_scale};
  s.seed = stream(cfg, kInit);
  return std::make_unique<FedMptModel>(std::move(encoders), s);
}

RunOutcome execute_run(const RunConfig& cfg,
                       const std::function<void(const EvalRecord&)>& on_eval) {
  Experiment ex = build_experiment(cfg);
  std::unique_ptr<Model> prototype = build_model(cfg, ex.encoders, ex.class_names);

  FedConfig fed;
  fed.clients = ex.shards.size();
  fed.rounds = cfg.fed.rounds;
  fed.participation = cfg.fed.participation;
  fed.weighting = cfg.fed.weighting == "size_weighted" ? Weighting::kSizeWeighted
                                                       : Weighting::kUniform;
  fed.seed = stream(cfg, kFederation);

  TrainSettings train;
  train.lr = cfg.hyper.lr;
  train.batch = cfg.hyper.batch;
  train.local_epochs = cfg.hyper.local_epochs;
  train.asl = AslConfig{cfg.hyper.gamma_pos, cfg.hyper.gamma_neg, cfg.hyper.clip, 1e-8};

  std::vector<ClientState> clients;
  clients.reserve(ex.shards.size());
  RunReport report;
  report.config = cfg;
  for (std::size_t k = 0; k < ex.shards.size(); ++k) {
    ClientState c;
    c.client_id = k;
    c.shard = std::make_shared<const EncodedShard>(
        encode_samples(ex.train, ex.encoders->visual, ex.shards[k]));
    c.model = prototype->clone();
    c.seed = mix_seed(stream(cfg, kShuffle), k);
    clients.push_back(std::move(c));
    report.shard_sizes.push_back(ex.shards[k].size());
  }
  const EncodedShard eval_set = encode_samples(ex.eval, ex.encoders->visual);

  Server server{extract_bundle(*prototype)};
  std::size_t current_round = 0;
  auto track = [&](const EvalRecord& r) {
    current_round = r.round;
    if (on_eval) on_eval(r);
  };
  try {
    report.records = run_experiment(server, clients, fed, train, *prototype, eval_set,
                                    cfg.eval_interval, track);
  } catch (const NumericalError& e) {
    throw NumericalError("numerical failure in round " + std::to_string(current_round + 1) +
                         ": " + e.what());
  }
  return RunOutcome{std::move(report), std::move(server.global)};
}

std::filesystem::path run_and_persist(const RunConfig& cfg,
                                      const std::function<void(const EvalRecord&)>& on_eval) {
  RunOutcome out = execute_run(cfg, on_eval);
  const std::filesystem::path dir = resolve_output_dir(cfg.output_dir);
  write_report(dir, out.report, out.bundle);
  return dir;
}

SweepAxis parse_sweep_axis(const std::string& text) {
  if (text == "t") return SweepAxis::kT;
  if (text == "mask") return SweepAxis::kMask;
  if (text == "participation") return SweepAxis::kParticipation;
  throw ConfigError("unknown sweep axis \"" + text + "\" (expected t, mask or participation)");
}

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::kT:
      return "t";
    case SweepAxis::kMask:
      return "mask";
    case SweepAxis::kParticipation:
      return "participation";
  }
  return "?";
}

RunConfig with_axis_value(RunConfig cfg, SweepAxis axis, double value) {
  switch (axis) {
    case SweepAxis::kT:
      cfg.t_percent = value;
      break;
    case SweepAxis::kMask:
      cfg.mask_percent = value;
      break;
    case SweepAxis::kParticipation:
      cfg.fed.participation = value;
      break;
  }
  cfg.validate();
  return cfg;
}

std::vector<SweepRow> run_sweep(const RunConfig& base, SweepAxis axis,
                                std::span<const double> values,
                                std::filesystem::path* summary_dir) {
  const std::string axis_name = to_string(axis);
  const std::filesystem::path root = std::filesystem::path(base.output_dir) /
                                     ("sweep_" + axis_name);
  std::vector<SweepRow> rows;
  for (double v : values) {
    SweepRow row;
    row.value = v;
    try {
      RunConfig cfg = with_axis_value(base, axis, v);
      cfg.output_dir = (root / (axis_name + "_" + format_double(v))).string();
      RunOutcome out = execute_run(cfg);
      write_report(resolve_output_dir(cfg.output_dir), out.report, out.bundle);
      row.ok = true;
      row.shard_sizes = out.report.shard_sizes;
      row.final_record = out.report.records.back();
    } catch (const Error& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }

  const std::filesystem::path dir = resolve_output_dir(root.string());
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json doc;
  doc["axis"] = axis_name;
  auto list = nlohmann::ordered_json::array();
  std::ostringstream csv;
  csv << "value,status,round,mAP,CF1,OF1,mean_train_loss,shards\n";
  for (const SweepRow& r : rows) {
    nlohmann::ordered_json j;
    j["value"] = r.value;
    j["status"] = r.ok ? "ok" : "failed";
    if (r.ok) {
      j["round"] = r.final_record.round;
      j["mAP"] = r.final_record.map;
      j["CF1"] = r.final_record.cf1;
      j["OF1"] = r.final_record.of1;
      j["mean_train_loss"] = r.final_record.mean_train_loss;
      j["shard_sizes"] = r.shard_sizes;
      csv << format_double(r.value) << ",ok," << r.final_record.round << ','
          << format_double(r.final_record.map) << ',' << format_double(r.final_record.cf1)
          << ',' << format_double(r.final_record.of1) << ','
          << format_double(r.final_record.mean_train_loss) << ',' << r.shard_sizes.size()
          << '\n';
    } else {
      j["error"] = r.error;
      csv << format_double(r.value) << ",failed,,,,,,\n";
    }
    list.push_back(std::move(j));
  }
  doc["rows"] = std::move(list);
  std::ofstream(dir / "summary.json") << doc.dump(2) << '\n';
  std::ofstream(dir / "summary.csv") << csv.str();
  if (summary_dir) *summary_dir = dir;
  return rows;
}

}  // namespace fedmpt
