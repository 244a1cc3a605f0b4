#pragma once

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "auxbo/auxbo.hpp"
#include "gradcheck.hpp"

namespace auxbo::test {

inline ModelConfig tiny_model_config(Variant v = Variant::aux) {
  ModelConfig c;
  c.model_dim = 16;
  c.ffn_dim = 32;
  c.predictor_layers = 2;
  c.sequence_encoder_layers = 1;
  c.heads = 2;
  c.variant = v;
  return c;
}

inline Normalization unit_normalization(std::size_t channels = 4) {
  Normalization n;
  n.reward_mean = 0.0;
  n.reward_std = 1.0;
  n.aux_mean.assign(channels, 0.0);
  n.aux_std.assign(channels, 1.0);
  return n;
}

/// Small synthetic task drawn from the simulator.
inline TaskDataset small_task(std::uint64_t seed, std::size_t pool = 160) {
  return generate_task(seed, Split::train, 0, pool);
}

inline std::string data_dir() { return AUXBO_TEST_DATA; }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    std::string name = "auxbo_" + tag;
    if (info) name += std::string("_") + info->test_suite_name() + "_" + info->name();
    path_ = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

}  // namespace auxbo::test
