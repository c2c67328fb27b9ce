#include "fedmpt/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "fedmpt/error.hpp"

namespace fedmpt {

namespace {

using Json = nlohmann::json;

// Reads known keys from one JSON object and rejects anything else.
class Section {
 public:
  Section(const Json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) throw ConfigError(where("") + " must be an object");
  }

  void finish() const {
    for (const auto& [key, _] : doc_.items()) {
      if (!seen_.contains(key)) throw ConfigError("unknown config key \"" + where(key) + "\"");
    }
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    if (!doc_.contains(key)) return;
    try {
      out = doc_.at(key).get<T>();
    } catch (const Json::exception&) {
      throw ConfigError("config key \"" + where(key) + "\" has the wrong type");
    }
  }

  const Json* child(const std::string& key) {
    seen_.insert(key);
    return doc_.contains(key) ? &doc_.at(key) : nullptr;
  }

  std::string where(const std::string& key) const {
    if (path_.empty()) return key;
    return key.empty() ? path_ : path_ + "." + key;
  }

 private:
  const Json& doc_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& key, const std::string& why) {
  if (!ok) throw ConfigError("config key \"" + key + "\" " + why);
}

}  // namespace

std::string to_string(ModelKind kind) {
  return kind == ModelKind::kFedMpt ? "fedmpt" : "baseline";
}

void RunConfig::validate() const {
  const auto& g = generator;
  require(g.classes >= 1, "generator.classes", "must be at least 1");
  require(g.input_dim >= 1, "generator.input_dim", "must be at least 1");
  require(g.train_samples >= 1, "generator.train_samples", "must be at least 1");
  require(g.eval_samples >= 1, "generator.eval_samples", "must be at least 1");
  require(g.spurious_strength >= 0.0 && g.spurious_strength <= 1.0,
          "generator.spurious_strength", "must lie in [0, 1]");
  require(g.base_rate >= 0.0 && g.base_rate <= 1.0, "generator.base_rate",
          "must lie in [0, 1]");
  require(g.noise_std >= 0.0, "generator.noise_std", "must be non-negative");
  require(encoders.patches >= 1, "encoders.patches", "must be at least 1");
  require(encoders.embed_dim >= 1, "encoders.embed_dim", "must be at least 1");
  require(encoders.token_dim >= 1, "encoders.token_dim", "must be at least 1");
  require(!conditions.empty(), "conditions", "must list at least one condition");
  require(t_percent > 0.0 && t_percent <= 100.0, "partition.t_percent", "must lie in (0, 100]");
  require(mask_percent >= 0.0 && mask_percent < 100.0, "mask.mask_percent",
          "must lie in [0, 100)");
  require(fed.participation > 0.0 && fed.participation <= 1.0, "fed.participation",
          "must lie in (0, 1]");
  require(fed.weighting == "uniform" || fed.weighting == "size_weighted", "fed.weighting",
          "must be \"uniform\" or \"size_weighted\"");
  require(hyper.tau > 0.0, "hyper.tau", "must be positive");
  require(hyper.lambda > 0.0, "hyper.lambda", "must be positive");
  require(hyper.logit_scale > 0.0, "hyper.logit_scale", "must be positive");
  require(hyper.rank >= 1 && hyper.rank <= encoders.embed_dim, "hyper.D_s",
          "must lie in [1, encoders.embed_dim]");
  require(hyper.gamma_pos >= 0.0, "hyper.gamma_pos", "must be non-negative");
  require(hyper.gamma_neg >= hyper.gamma_pos, "hyper.gamma_neg", "must be >= gamma_pos");
  require(hyper.clip >= 0.0 && hyper.clip < 1.0, "hyper.clip", "must lie in [0, 1)");
  require(hyper.lr > 0.0, "hyper.lr", "must be positive");
  require(hyper.batch >= 1, "hyper.batch", "must be at least 1");
  require(hyper.sinkhorn_max_iters >= 1, "hyper.sinkhorn_max_iters", "must be at least 1");
  require(hyper.sinkhorn_tol > 0.0, "hyper.sinkhorn_tol", "must be positive");
  require(eval_interval >= 1, "eval_interval", "must be at least 1");
  require(!output_dir.empty(), "output_dir", "must not be empty");
}

RunConfig config_from_json(const Json& doc) {
  RunConfig cfg;
  {
    Section top(doc, "");
    std::string model = to_string(cfg.model);
    top.read("model", model);
    if (model == "fedmpt") {
      cfg.model = ModelKind::kFedMpt;
    } else if (model == "baseline") {
      cfg.model = ModelKind::kBaseline;
    } else {
      throw ConfigError("config key \"model\" must be \"fedmpt\" or \"baseline\"");
    }
    top.read("seed", cfg.seed);
    top.read("conditions", cfg.conditions);
    top.read("eval_interval", cfg.eval_interval);
    top.read("output_dir", cfg.output_dir);

    if (const Json* g = top.child("generator")) {
      Section s(*g, "generator");
      s.read("classes", cfg.generator.classes);
      s.read("input_dim", cfg.generator.input_dim);
      s.read("train_samples", cfg.generator.train_samples);
      s.read("eval_samples", cfg.generator.eval_samples);
      s.read("spurious_strength", cfg.generator.spurious_strength);
      s.read("base_rate", cfg.generator.base_rate);
      s.read("noise_std", cfg.generator.noise_std);
      s.read("context_scale", cfg.generator.context_scale);
      std::vector<std::vector<double>> matrix;
      s.read("base_cooccurrence", matrix);
      s.finish();
      if (!matrix.empty()) {
        std::vector<double> flat;
        for (const auto& row : matrix) {
          if (row.size() != matrix.size()) {
            throw ConfigError("config key \"generator.base_cooccurrence\" must be square");
          }
          flat.insert(flat.end(), row.begin(), row.end());
        }
        cfg.generator.base_cooccurrence = Tensor({matrix.size(), matrix.size()}, flat);
      }
    }
    if (const Json* e = top.child("encoders")) {
      Section s(*e, "encoders");
      s.read("patches", cfg.encoders.patches);
      s.read("embed_dim", cfg.encoders.embed_dim);
      s.read("token_dim", cfg.encoders.token_dim);
      s.finish();
    }
    if (const Json* p = top.child("partition")) {
      Section s(*p, "partition");
      s.read("t_percent", cfg.t_percent);
      s.finish();
    }
    if (const Json* m = top.child("mask")) {
      Section s(*m, "mask");
      s.read("mask_percent", cfg.mask_percent);
      s.finish();
    }
    if (const Json* f = top.child("fed")) {
      Section s(*f, "fed");
      s.read("rounds", cfg.fed.rounds);
      s.read("participation", cfg.fed.participation);
      s.read("weighting", cfg.fed.weighting);
      s.finish();
    }
    if (const Json* h = top.child("hyper")) {
      Section s(*h, "hyper");
      auto& hp = cfg.hyper;
      s.read("tau", hp.tau);
      s.read("lambda", hp.lambda);
      s.read("logit_scale", hp.logit_scale);
      s.read("beta_cond", hp.beta_cond);
      s.read("beta_cls", hp.beta_cls);
      s.read("baseline_beta", hp.baseline_beta);
      s.read("D_s", hp.rank);
      s.read("gamma_pos", hp.gamma_pos);
      s.read("gamma_neg", hp.gamma_neg);
      s.read("clip", hp.clip);
      s.read("lr", hp.lr);
      s.read("batch", hp.batch);
      s.read("local_epochs", hp.local_epochs);
      s.read("sinkhorn_max_iters", hp.sinkhorn_max_iters);
      s.read("sinkhorn_tol", hp.sinkhorn_tol);
      s.read("alpha_init", hp.alpha_init);
      s.finish();
    }
    top.finish();
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(doc);
}

nlohmann::ordered_json config_to_json(const RunConfig& cfg) {
  nlohmann::ordered_json doc;
  doc["model"] = to_string(cfg.model);
  doc["seed"] = cfg.seed;
  auto& g = doc["generator"];
  g["classes"] = cfg.generator.classes;
  g["input_dim"] = cfg.generator.input_dim;
  g["train_samples"] = cfg.generator.train_samples;
  g["eval_samples"] = cfg.generator.eval_samples;
  g["spurious_strength"] = cfg.generator.spurious_strength;
  g["base_rate"] = cfg.generator.base_rate;
  g["noise_std"] = cfg.generator.noise_std;
  g["context_scale"] = cfg.generator.context_scale;
  if (cfg.generator.base_cooccurrence.size()) {
    const Tensor& m = cfg.generator.base_cooccurrence;
    auto rows = nlohmann::ordered_json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
      std::vector<double> row(m.data().begin() + r * m.cols(),
                              m.data().begin() + (r + 1) * m.cols());
      rows.push_back(row);
    }
    g["base_cooccurrence"] = rows;
  }
  doc["encoders"] = {{"patches", cfg.encoders.patches},
                     {"embed_dim", cfg.encoders.embed_dim},
                     {"token_dim", cfg.encoders.token_dim}};
  doc["conditions"] = cfg.conditions;
  doc["partition"] = {{"t_percent", cfg.t_percent}};
  doc["mask"] = {{"mask_percent", cfg.mask_percent}};
  doc["fed"] = {{"rounds", cfg.fed.rounds},
                {"participation", cfg.fed.participation},
                {"weighting", cfg.fed.weighting}};
  const auto& hp = cfg.hyper;
  auto& h = doc["hyper"];
  h["tau"] = hp.tau;
  h["lambda"] = hp.lambda;
  h["logit_scale"] = hp.logit_scale;
  h["beta_cond"] = hp.beta_cond;
  h["beta_cls"] = hp.beta_cls;
  h["baseline_beta"] = hp.baseline_beta;
  h["D_s"] = hp.rank;
  h["gamma_pos"] = hp.gamma_pos;
  h["gamma_neg"] = hp.gamma_neg;
  h["clip"] = hp.clip;
  h["lr"] = hp.lr;
  h["batch"] = hp.batch;
  h["local_epochs"] = hp.local_epochs;
  h["sinkhorn_max_iters"] = hp.sinkhorn_max_iters;
  h["sinkhorn_tol"] = hp.sinkhorn_tol;
  h["alpha_init"] = hp.alpha_init;
  doc["eval_interval"] = cfg.eval_interval;
  doc["output_dir"] = cfg.output_dir;
  return doc;
}

std::filesystem::path resolve_output_dir(const std::string& output_dir) {
  const std::filesystem::path dir(output_dir);
  if (const char* root = std::getenv("FEDMPT_OUTPUT_ROOT"); root && *root) {
    return std::filesystem::path(root) / dir.relative_path();
  }
  return dir;
}

}  // namespace fedmpt
