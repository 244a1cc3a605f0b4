#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "auxbo/numerics/rng.hpp"
#include "auxbo/tasks/dataset_io.hpp"
#include "auxbo/tasks/simulator.hpp"

namespace auxbo {

struct BenchmarkSpec {
  std::uint64_t seed = 0;
  std::size_t n_train = 200;
  std::size_t n_val = 25;
  std::size_t n_test = 50;
  std::size_t pool_size = 256;
};

inline Theta sample_theta(Rng& rng) {
  Theta th;
  th.k = rng.uniform(0.5, 2.0);
  th.c = rng.uniform(0.05, 0.6);
  th.m = rng.uniform(0.5, 1.5);
  th.g0 = rng.uniform(-0.3, 0.3);
  return th;
}

/// One task, a pure function of (seed, split, index, pool_size).
inline TaskDataset generate_task(std::uint64_t seed, Split split, std::size_t index, std::size_t pool_size) {
  Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(split), index}));
  TaskDataset t;
  char id[32];
  std::snprintf(id, sizeof id, "%s-%04zu", split_name(split), index);
  t.task_id = id;
  t.split = split;
  t.theta = sample_theta(rng);
  std::set<std::vector<double>> seen;
  t.records.reserve(pool_size);
  while (t.records.size() < pool_size) {
    std::vector<double> x(RampSpec::input_dim);
    for (double& xi : x) xi = rng.uniform(-1.0, 1.0);
    if (!seen.insert(x).second) continue;
    t.records.push_back(simulate_trial(*t.theta, x));
  }
  t.refresh_max();
  return t;
}

inline Benchmark generate_benchmark(const BenchmarkSpec& spec) {
  require(spec.n_train >= 1 && spec.n_val >= 1 && spec.n_test >= 1, "generate_benchmark: split counts must be >= 1");
  require(spec.pool_size >= 1, "generate_benchmark: pool_size must be >= 1");
  Benchmark b;
  auto fill = [&](std::vector<TaskDataset>& out, Split split, std::size_t n) {
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(generate_task(spec.seed, split, i, spec.pool_size));
  };
  fill(b.train, Split::train, spec.n_train);
  fill(b.val, Split::val, spec.n_val);
  fill(b.test, Split::test, spec.n_test);
  return b;
}

/// Nearest-rank quantile of an unsorted sample.
inline double sample_quantile(std::vector<double> v, double q) {
  require(!v.empty(), "sample_quantile: empty sample");
  std::sort(v.begin(), v.end());
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

inline nlohmann::ordered_json benchmark_summary(const Benchmark& b, const BenchmarkSpec& spec) {
  nlohmann::ordered_json s;
  s["seed"] = spec.seed;
  s["pool_size"] = spec.pool_size;
  s["counts"] = {{"train", b.train.size()}, {"val", b.val.size()}, {"test", b.test.size()}};
  auto split_stats = [](const std::vector<TaskDataset>& tasks) {
    std::vector<double> fs, maxes;
    std::size_t zero = 0, ge4 = 0;
    for (const auto& t : tasks) {
      maxes.push_back(t.max_f);
      if (t.max_f >= 4.0) ++ge4;
      for (const auto& r : t.records) {
        fs.push_back(r.f);
        if (r.f == 0.0) ++zero;
      }
    }
    nlohmann::ordered_json q;
    for (double p : {0.1, 0.25, 0.5, 0.75, 0.9, 1.0}) {
      char key[16];
      std::snprintf(key, sizeof key, "q%02d", static_cast<int>(std::lround(p * 100)));
      q[key] = sample_quantile(fs, p);
    }
    nlohmann::ordered_json o;
    o["reward_quantiles"] = q;
    o["fraction_zero_reward"] = static_cast<double>(zero) / static_cast<double>(fs.size());
    o["max_f_quantiles"] = {{"q10", sample_quantile(maxes, 0.1)}, {"q50", sample_quantile(maxes, 0.5)},
                            {"q90", sample_quantile(maxes, 0.9)}};
    o["fraction_tasks_max_f_ge_4"] = static_cast<double>(ge4) / static_cast<double>(tasks.size());
    return o;
  };
  s["train"] = split_stats(b.train);
  s["val"] = split_stats(b.val);
  s["test"] = split_stats(b.test);
  return s;
}

/// Writes train.jsonl, val.jsonl, test.jsonl and summary.json into `dir`.
inline void write_benchmark(const std::filesystem::path& dir, const Benchmark& b, const BenchmarkSpec& spec) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError(dir.string(), "cannot create directory: " + ec.message());
  write_tasks(dir / "train.jsonl", b.train);
  write_tasks(dir / "val.jsonl", b.val);
  write_tasks(dir / "test.jsonl", b.test);
  std::ofstream out(dir / "summary.json", std::ios::binary | std::ios::trunc);
  if (!out) throw IoError((dir / "summary.json").string(), "cannot open for writing");
  out << benchmark_summary(b, spec).dump(2) << '\n';
  if (!out) throw IoError((dir / "summary.json").string(), "write failed");
}

inline Benchmark load_benchmark(const std::filesystem::path& dir) {
  Benchmark b;
  b.train = load_tasks(dir / "train.jsonl");
  b.val = load_tasks(dir / "val.jsonl");
  b.test = load_tasks(dir / "test.jsonl");
  return b;
}

}  // namespace auxbo
