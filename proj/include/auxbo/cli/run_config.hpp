#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "auxbo/engine/acquisition.hpp"
#include "auxbo/engine/train.hpp"
#include "auxbo/gp/dgp.hpp"
#include "auxbo/gp/stgp.hpp"
#include "auxbo/model/config.hpp"
#include "auxbo/tasks/generate.hpp"
#include "auxbo/tasks/sampler.hpp"

namespace auxbo::cli {

/// Invalid configuration document (unknown key, wrong type, bad value).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DgpSettings {
  gp::DgpConfig model;
  gp::DgpTrainConfig train;
  std::vector<gp::KernelFamily> families{gp::KernelFamily::rbf, gp::KernelFamily::matern52};
  std::vector<std::size_t> embedding_dims{8, 16, 32};
};

struct ProtocolConfig {
  std::vector<std::size_t> sizes{5, 10, 20, 30};
  std::size_t repeats = 10;
  std::size_t target_size = 100;
  std::size_t init_size = 5;
  std::size_t trials = 30;
  std::size_t runs = 5;
  AcquisitionKind acquisition = AcquisitionKind::pi;
  double init_fraction = 0.3;
  double solved_threshold = 0.5;
};

struct PathsConfig {
  std::string data;
  std::string out;
};

/// Everything a command can be configured with, as one JSON document.
struct RunConfig {
  std::uint64_t seed = 0;
  ModelConfig model;
  SamplerConfig sampler;
  TrainConfig train;
  DgpSettings dgp;
  gp::StgpConfig stgp;
  ProtocolConfig protocol;
  BenchmarkSpec generation;
  PathsConfig paths;
};

namespace detail {

using ojson = nlohmann::ordered_json;

/// Reads members of one JSON object, rejecting keys that are never read.
class Section {
 public:
  Section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + "expected an object");
  }
  /// Throws on the first key that no get()/child() call asked for.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw ConfigError("unknown config key '" + prefix() + it.key() + "'");
  }

  template <class T>
  void get(const char* key, T& out) {
    used_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config key '" + prefix() + key + "' has the wrong type");
    }
  }

  void get_size(const char* key, std::size_t& out) {
    used_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    if (!it->is_number_unsigned()) throw ConfigError("config key '" + prefix() + key + "' must be a nonnegative integer");
    out = it->get<std::size_t>();
  }

  void get_u64(const char* key, std::uint64_t& out) {
    std::size_t v = out;
    get_size(key, v);
    out = v;
  }

  const nlohmann::json* child(const char* key) {
    used_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string prefix() const { return path_.empty() ? "" : path_ + "."; }

 private:
  std::string where() const { return path_.empty() ? "config: " : "config key '" + path_ + "': "; }
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> used_;
};

inline void read_model(const nlohmann::json& j, ModelConfig& m) {
  Section s(j, "model");
  s.get_size("input_dim", m.input_dim);
  s.get_size("aux_channels", m.aux_channels);
  s.get_size("model_dim", m.model_dim);
  s.get_size("predictor_layers", m.predictor_layers);
  s.get_size("sequence_encoder_layers", m.sequence_encoder_layers);
  s.get_size("heads", m.heads);
  s.get_size("ffn_dim", m.ffn_dim);
  s.get("dropout_rate", m.dropout_rate);
  s.get("sigma_floor", m.sigma_floor);
  std::string v = variant_name(m.variant);
  s.get("variant", v);
  auto pv = parse_variant(v);
  if (!pv) throw ConfigError("config key 'model.variant' must be \"aux\" or \"reward_only\"");
  m.variant = *pv;
  s.finish();
}

inline void read_sampler(const nlohmann::json& j, SamplerConfig& c) {
  Section s(j, "sampler");
  s.get_size("context_min", c.context_min);
  s.get_size("context_max", c.context_max);
  s.get_size("target_size", c.target_size);
  s.get("balanced_context", c.balanced_context);
  s.get("balanced_target", c.balanced_target);
  s.get("high_quantile", c.high_quantile);
  s.finish();
}

inline void read_train(const nlohmann::json& j, TrainConfig& c) {
  Section s(j, "train");
  s.get_size("batch_tasks", c.batch_tasks);
  s.get("learning_rate", c.learning_rate);
  s.get("weight_decay", c.weight_decay);
  if (const auto* d = s.child("dropout")) {
    if (d->is_null())
      c.dropout.reset();
    else if (d->is_number())
      c.dropout = d->get<double>();
    else
      throw ConfigError("config key 'train.dropout' must be a number or null");
  }
  s.get_size("max_epochs", c.max_epochs);
  s.get_size("patience", c.patience);
  s.get_size("steps_per_epoch", c.steps_per_epoch);
  s.get_size("val_draws", c.val_draws);
  s.finish();
}

inline gp::KernelFamily family_or_throw(const std::string& name, const std::string& key) {
  auto f = gp::parse_family(name);
  if (!f) throw ConfigError("config key '" + key + "' must be \"rbf\" or \"matern52\"");
  return *f;
}

inline void read_dgp(const nlohmann::json& j, DgpSettings& d) {
  Section s(j, "dgp");
  s.get_size("hidden_dim", d.model.hidden_dim);
  s.get_size("hidden_layers", d.model.hidden_layers);
  std::vector<std::string> fams;
  for (auto f : d.families) fams.push_back(gp::family_name(f));
  s.get("families", fams);
  d.families.clear();
  for (const auto& f : fams) d.families.push_back(family_or_throw(f, "dgp.families"));
  s.get("embedding_dims", d.embedding_dims);
  s.get_size("batch_tasks", d.train.batch_tasks);
  s.get("learning_rate", d.train.learning_rate);
  s.get("weight_decay", d.train.weight_decay);
  s.get_size("max_epochs", d.train.max_epochs);
  s.get_size("patience", d.train.patience);
  s.get_size("sample_size", d.train.sample_size);
  s.get_size("val_draws", d.train.val_draws);
  s.finish();
}

inline void read_stgp(const nlohmann::json& j, gp::StgpConfig& c) {
  Section s(j, "stgp");
  std::string fam = gp::family_name(c.family);
  s.get("family", fam);
  c.family = family_or_throw(fam, "stgp.family");
  s.get_size("restarts", c.restarts);
  s.get_size("iterations", c.iterations);
  s.get("learning_rate", c.learning_rate);
  s.get("lengthscale_prior_scale", c.lengthscale_prior_scale);
  s.finish();
}

inline void read_protocol(const nlohmann::json& j, ProtocolConfig& p) {
  Section s(j, "protocol");
  s.get("sizes", p.sizes);
  s.get_size("repeats", p.repeats);
  s.get_size("target_size", p.target_size);
  s.get_size("init_size", p.init_size);
  s.get_size("trials", p.trials);
  s.get_size("runs", p.runs);
  std::string acq = acquisition_name(p.acquisition);
  s.get("acquisition", acq);
  auto a = parse_acquisition(acq);
  if (!a) throw ConfigError("config key 'protocol.acquisition' must be \"pi\" or \"greedy\"");
  p.acquisition = *a;
  s.get("init_fraction", p.init_fraction);
  s.get("solved_threshold", p.solved_threshold);
  s.finish();
}

inline void read_generation(const nlohmann::json& j, BenchmarkSpec& g) {
  Section s(j, "generation");
  s.get_size("n_train", g.n_train);
  s.get_size("n_val", g.n_val);
  s.get_size("n_test", g.n_test);
  s.get_size("pool_size", g.pool_size);
  s.finish();
}

inline void read_paths(const nlohmann::json& j, PathsConfig& p) {
  Section s(j, "paths");
  s.get("data", p.data);
  s.get("out", p.out);
  s.finish();
}

}  // namespace detail

/// Fills a RunConfig from a JSON document; absent keys keep their defaults.
inline RunConfig parse_run_config(const nlohmann::json& j) {
  RunConfig c;
  detail::Section s(j, "");
  s.get_u64("seed", c.seed);
  if (const auto* v = s.child("model")) detail::read_model(*v, c.model);
  if (const auto* v = s.child("sampler")) detail::read_sampler(*v, c.sampler);
  if (const auto* v = s.child("train")) detail::read_train(*v, c.train);
  if (const auto* v = s.child("dgp")) detail::read_dgp(*v, c.dgp);
  if (const auto* v = s.child("stgp")) detail::read_stgp(*v, c.stgp);
  if (const auto* v = s.child("protocol")) detail::read_protocol(*v, c.protocol);
  if (const auto* v = s.child("generation")) detail::read_generation(*v, c.generation);
  if (const auto* v = s.child("paths")) detail::read_paths(*v, c.paths);
  s.finish();
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open config for reading");
  std::stringstream ss;
  ss << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
  return parse_run_config(j);
}

/// The effective (default-filled) configuration.
inline nlohmann::ordered_json to_json(const RunConfig& c) {
  using detail::ojson;
  ojson j;
  j["seed"] = c.seed;
  j["model"] = auxbo::to_json(c.model);
  j["sampler"] = {{"context_min", c.sampler.context_min},         {"context_max", c.sampler.context_max},
                  {"target_size", c.sampler.target_size},         {"balanced_context", c.sampler.balanced_context},
                  {"balanced_target", c.sampler.balanced_target}, {"high_quantile", c.sampler.high_quantile}};
  j["train"] = {{"batch_tasks", c.train.batch_tasks},
                {"learning_rate", c.train.learning_rate},
                {"weight_decay", c.train.weight_decay},
                {"dropout", c.train.dropout ? ojson(*c.train.dropout) : ojson(nullptr)},
                {"max_epochs", c.train.max_epochs},
                {"patience", c.train.patience},
                {"steps_per_epoch", c.train.steps_per_epoch},
                {"val_draws", c.train.val_draws}};
  ojson fams = ojson::array();
  for (auto f : c.dgp.families) fams.push_back(gp::family_name(f));
  j["dgp"] = {{"hidden_dim", c.dgp.model.hidden_dim},
              {"hidden_layers", c.dgp.model.hidden_layers},
              {"families", fams},
              {"embedding_dims", c.dgp.embedding_dims},
              {"batch_tasks", c.dgp.train.batch_tasks},
              {"learning_rate", c.dgp.train.learning_rate},
              {"weight_decay", c.dgp.train.weight_decay},
              {"max_epochs", c.dgp.train.max_epochs},
              {"patience", c.dgp.train.patience},
              {"sample_size", c.dgp.train.sample_size},
              {"val_draws", c.dgp.train.val_draws}};
  j["stgp"] = {{"family", gp::family_name(c.stgp.family)},
               {"restarts", c.stgp.restarts},
               {"iterations", c.stgp.iterations},
               {"learning_rate", c.stgp.learning_rate},
               {"lengthscale_prior_scale", c.stgp.lengthscale_prior_scale}};
  j["protocol"] = {{"sizes", c.protocol.sizes},
                   {"repeats", c.protocol.repeats},
                   {"target_size", c.protocol.target_size},
                   {"init_size", c.protocol.init_size},
                   {"trials", c.protocol.trials},
                   {"runs", c.protocol.runs},
                   {"acquisition", acquisition_name(c.protocol.acquisition)},
                   {"init_fraction", c.protocol.init_fraction},
                   {"solved_threshold", c.protocol.solved_threshold}};
  j["generation"] = {{"n_train", c.generation.n_train},
                     {"n_val", c.generation.n_val},
                     {"n_test", c.generation.n_test},
                     {"pool_size", c.generation.pool_size}};
  j["paths"] = {{"data", c.paths.data}, {"out", c.paths.out}};
  return j;
}

}  // namespace auxbo::cli
