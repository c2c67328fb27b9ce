#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fedmpt/tensor.hpp"

namespace fedmpt {

enum class ModelKind { kFedMpt, kBaseline };

struct GeneratorConfig {
  std::size_t classes = 12;
  std::size_t input_dim = 48;
  std::size_t train_samples = 2400;
  std::size_t eval_samples = 600;
  double spurious_strength = 0.8;
  double base_rate = 0.15;
  double noise_std = 0.3;
  double context_scale = 1.5;
  Tensor base_cooccurrence;  // empty: generator default
};

struct EncoderConfig {
  std::size_t patches = 16;
  std::size_t embed_dim = 32;
  std::size_t token_dim = 32;
};

struct FedSection {
  std::size_t rounds = 10;
  double participation = 1.0;
  std::string weighting = "uniform";
};

struct HyperConfig {
  double tau = 4.0;
  double lambda = 0.2;
  double logit_scale = 100.0;
  std::size_t beta_cond = 4;
  std::size_t beta_cls = 4;
  std::size_t baseline_beta = 8;
  std::size_t rank = 16;  // D_s
  double gamma_pos = 1.0;
  double gamma_neg = 2.0;
  double clip = 0.05;
  double lr = 0.001;
  std::size_t batch = 32;
  std::size_t local_epochs = 1;
  int sinkhorn_max_iters = 200;
  double sinkhorn_tol = 1e-8;
  double alpha_init = 5.0;
};

// Fully resolved experiment description. Every field has a default; the
// JSON form rejects unknown keys.
struct RunConfig {
  ModelKind model = ModelKind::kFedMpt;
  std::uint64_t seed = 0;
  GeneratorConfig generator;
  EncoderConfig encoders;
  std::vector<std::string> conditions{"background", "position", "shape", "action"};
  double t_percent = 10.0;
  double mask_percent = 0.0;
  FedSection fed;
  HyperConfig hyper;
  std::size_t eval_interval = 1;
  std::string output_dir = "runs/default";

  void validate() const;
};

std::string to_string(ModelKind kind);

// Throws ConfigError naming the offending key.
RunConfig config_from_json(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path);
nlohmann::ordered_json config_to_json(const RunConfig& cfg);

// Output directory after applying the FEDMPT_OUTPUT_ROOT override.
std::filesystem::path resolve_output_dir(const std::string& output_dir);

}  // namespace fedmpt
