#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "auxbo/numerics/errors.hpp"
#include "auxbo/tasks/dataset.hpp"

namespace auxbo {

enum class Variant { aux, reward_only };

inline const char* variant_name(Variant v) { return v == Variant::aux ? "aux" : "reward_only"; }

inline std::optional<Variant> parse_variant(const std::string& s) {
  if (s == "aux") return Variant::aux;
  if (s == "reward_only") return Variant::reward_only;
  return std::nullopt;
}

struct ModelConfig {
  std::size_t input_dim = 4;
  std::size_t aux_channels = 4;
  std::size_t model_dim = 64;
  std::size_t predictor_layers = 4;
  std::size_t sequence_encoder_layers = 2;
  std::size_t heads = 4;
  std::size_t ffn_dim = 128;
  double dropout_rate = 0.1;
  double sigma_floor = 1e-3;
  Variant variant = Variant::aux;

  void validate() const {
    require(input_dim >= 1, "ModelConfig: input_dim must be positive");
    require(model_dim >= 1 && heads >= 1 && model_dim % heads == 0, "ModelConfig: model_dim must be divisible by heads");
    require(predictor_layers >= 1, "ModelConfig: predictor_layers must be positive");
    require(ffn_dim >= 1, "ModelConfig: ffn_dim must be positive");
    require(dropout_rate >= 0.0 && dropout_rate < 1.0, "ModelConfig: dropout_rate must be in [0,1)");
    require(sigma_floor > 0.0, "ModelConfig: sigma_floor must be positive");
    if (variant == Variant::aux) {
      require(aux_channels >= 1, "ModelConfig: aux variant needs aux_channels >= 1");
      require(sequence_encoder_layers >= 1, "ModelConfig: aux variant needs sequence_encoder_layers >= 1");
    }
  }
  bool operator==(const ModelConfig&) const = default;
};

inline nlohmann::ordered_json to_json(const ModelConfig& c) {
  return {{"input_dim", c.input_dim},
          {"aux_channels", c.aux_channels},
          {"model_dim", c.model_dim},
          {"predictor_layers", c.predictor_layers},
          {"sequence_encoder_layers", c.sequence_encoder_layers},
          {"heads", c.heads},
          {"ffn_dim", c.ffn_dim},
          {"dropout_rate", c.dropout_rate},
          {"sigma_floor", c.sigma_floor},
          {"variant", variant_name(c.variant)}};
}

/// Reward and per-channel aux statistics of the training split. Surrogates
/// work on f~ = (f - mean) / std and z-scored aux channels.
struct Normalization {
  double reward_mean = 0.0;
  double reward_std = 1.0;
  std::vector<double> aux_mean;
  std::vector<double> aux_std;

  double normalize(double f) const { return (f - reward_mean) / reward_std; }
  double denormalize(double f) const { return f * reward_std + reward_mean; }
  bool operator==(const Normalization&) const = default;
};

inline Normalization compute_normalization(const std::vector<TaskDataset>& train) {
  require(!train.empty(), "compute_normalization: no training tasks");
  Normalization n;
  double sum = 0.0, sq = 0.0;
  std::size_t count = 0;
  std::size_t ch = 0;
  for (const auto& t : train) ch = std::max(ch, t.aux_channels());
  std::vector<double> hs(ch, 0.0), hq(ch, 0.0);
  std::size_t hcount = 0;
  for (const auto& t : train)
    for (const auto& r : t.records) {
      sum += r.f;
      sq += r.f * r.f;
      ++count;
      for (std::size_t s = 0; s < r.h.steps(); ++s) {
        for (std::size_t c = 0; c < ch; ++c) {
          hs[c] += r.h.step(s)[c];
          hq[c] += r.h.step(s)[c] * r.h.step(s)[c];
        }
        ++hcount;
      }
    }
  require(count > 0, "compute_normalization: no training records");
  const double dn = static_cast<double>(count);
  n.reward_mean = sum / dn;
  const double var = std::max(sq / dn - n.reward_mean * n.reward_mean, 0.0);
  n.reward_std = var > 1e-12 ? std::sqrt(var) : 1.0;
  n.aux_mean.assign(ch, 0.0);
  n.aux_std.assign(ch, 1.0);
  if (hcount > 0)
    for (std::size_t c = 0; c < ch; ++c) {
      const double m = hs[c] / static_cast<double>(hcount);
      const double v = std::max(hq[c] / static_cast<double>(hcount) - m * m, 0.0);
      n.aux_mean[c] = m;
      n.aux_std[c] = v > 1e-12 ? std::sqrt(v) : 1.0;
    }
  return n;
}

inline nlohmann::ordered_json to_json(const Normalization& n) {
  return {{"reward_mean", n.reward_mean}, {"reward_std", n.reward_std}, {"aux_mean", n.aux_mean}, {"aux_std", n.aux_std}};
}

inline Normalization normalization_from_json(const nlohmann::json& j) {
  Normalization n;
  n.reward_mean = j.at("reward_mean").get<double>();
  n.reward_std = j.at("reward_std").get<double>();
  n.aux_mean = j.at("aux_mean").get<std::vector<double>>();
  n.aux_std = j.at("aux_std").get<std::vector<double>>();
  return n;
}

}  // namespace auxbo
