#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "auxbo/model/types.hpp"
#include "auxbo/numerics/gaussian.hpp"

namespace auxbo {

enum class AcquisitionKind { pi, greedy };

inline const char* acquisition_name(AcquisitionKind k) { return k == AcquisitionKind::pi ? "pi" : "greedy"; }

inline std::optional<AcquisitionKind> parse_acquisition(const std::string& s) {
  if (s == "pi") return AcquisitionKind::pi;
  if (s == "greedy") return AcquisitionKind::greedy;
  return std::nullopt;
}

/// pi: P[f > f_best] = Phi((mu - f_best) / sigma); greedy: mu.
/// f_best = -infinity gives PI = 1.
inline double acquisition_score(AcquisitionKind kind, const GaussianPrediction& p, double f_best) {
  if (kind == AcquisitionKind::greedy) return p.mu;
  require(p.sigma > 0.0, "acquisition_score: sigma must be positive");
  if (std::isinf(f_best) && f_best < 0) return 1.0;
  return normal_cdf((p.mu - f_best) / p.sigma);
}

}  // namespace auxbo
