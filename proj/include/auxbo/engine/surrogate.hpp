#pragma once

#include <memory>
#include <string>
#include <vector>

#include "auxbo/gp/dgp.hpp"
#include "auxbo/gp/stgp.hpp"
#include "auxbo/model/checkpoint.hpp"

namespace auxbo {

/// Anything that maps (context, target designs) to Gaussian predictions in raw
/// reward units.
class Surrogate {
 public:
  virtual ~Surrogate() = default;
  virtual std::vector<GaussianPrediction> predict(const ContextSet& context, const TargetInputs& targets) const = 0;
  /// Short label used in CSV output ("aux", "reward_only", "stgp", "dgp").
  virtual std::string name() const = 0;
};

class TransformerSurrogate final : public Surrogate {
 public:
  explicit TransformerSurrogate(SurrogateModel model) : model_(std::move(model)) {}
  std::vector<GaussianPrediction> predict(const ContextSet& c, const TargetInputs& t) const override {
    return model_.predict(c, t);
  }
  std::string name() const override { return variant_name(model_.config().variant); }
  const SurrogateModel& model() const { return model_; }

 private:
  SurrogateModel model_;
};

class DeepKernelSurrogate final : public Surrogate {
 public:
  explicit DeepKernelSurrogate(gp::DeepKernelModel model) : model_(std::move(model)) {}
  std::vector<GaussianPrediction> predict(const ContextSet& c, const TargetInputs& t) const override {
    return model_.predict(c, t);
  }
  std::string name() const override { return "dgp"; }

 private:
  gp::DeepKernelModel model_;
};

/// Single-task GP refit from scratch on the (x, f) part of every context it
/// is given; h is ignored.
class SingleTaskGpSurrogate final : public Surrogate {
 public:
  explicit SingleTaskGpSurrogate(gp::StgpConfig cfg = {}) : cfg_(cfg) {}
  std::vector<GaussianPrediction> predict(const ContextSet& c, const TargetInputs& t) const override {
    require(c.size() >= 2, "stgp: context needs at least 2 points");
    require(!t.empty(), "stgp: empty target set");
    std::vector<std::vector<double>> xs;
    Eigen::VectorXd y(static_cast<Eigen::Index>(c.size()));
    for (std::size_t i = 0; i < c.size(); ++i) {
      xs.push_back(c[i].x);
      y(static_cast<Eigen::Index>(i)) = c[i].f;
    }
    const gp::Matrix x = gp::to_matrix(xs);
    gp::StgpConfig cfg = cfg_;
    cfg.seed = derive_seed(cfg_.seed, {c.size()});
    const gp::StgpFit fit = gp::fit_stgp(x, y, cfg);
    return gp::stgp_predict(fit, x, y, gp::to_matrix(t));
  }
  std::string name() const override { return "stgp"; }

 private:
  gp::StgpConfig cfg_;
};

/// Loads a transformer or deep-kernel checkpoint by its kind tag.
inline std::unique_ptr<Surrogate> load_surrogate(const std::filesystem::path& path,
                                                 std::optional<Variant> expected_variant = std::nullopt) {
  const ModelFile mf = read_model_file(path);
  if (mf.kind == ModelKind::dgp) {
    if (expected_variant)
      throw CheckpointError(CheckpointError::Kind::config_conflict, path.string(),
                            "a variant was requested but the checkpoint holds a dgp model");
    return std::make_unique<DeepKernelSurrogate>(gp::load_dgp(path));
  }
  return std::make_unique<TransformerSurrogate>(load_model(path, expected_variant));
}

}  // namespace auxbo
