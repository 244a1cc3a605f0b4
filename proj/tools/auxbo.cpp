// auxbo: generate benchmarks, train surrogates, evaluate predictions, run
// Bayesian optimization and aggregate the results.
//
// Exit codes: 0 success, 2 usage/config, 3 I/O, 4 numeric failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "auxbo/auxbo.hpp"

namespace fs = std::filesystem;
using namespace auxbo;
using cli::RunConfig;

namespace {

enum Exit { kOk = 0, kUsage = 2, kIo = 3, kNumeric = 4 };

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
};

RunConfig load_config(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : cli::load_run_config(c.config_path);
  // precedence: flag > AUXBO_SEED > config > default
  if (c.seed) {
    cfg.seed = *c.seed;
  } else if (const char* env = std::getenv("AUXBO_SEED"); env && *env) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (*end != '\0') throw cli::ConfigError(std::string("AUXBO_SEED is not an unsigned integer: ") + env);
    cfg.seed = v;
  }
  return cfg;
}

void echo_config(const fs::path& dir, const std::string& command, const RunConfig& cfg) {
  cli::write_text(dir / (command + ".config.json"), cli::to_json(cfg).dump(2) + "\n");
}

fs::path dir_of(const fs::path& file) { return file.has_parent_path() ? file.parent_path() : fs::path("."); }

std::unique_ptr<Surrogate> make_surrogate(const std::string& model_path, bool stgp, const std::string& variant,
                                          const RunConfig& cfg) {
  if (stgp == !model_path.empty()) throw cli::ConfigError("exactly one of --model or --stgp is required");
  if (stgp) {
    gp::StgpConfig s = cfg.stgp;
    s.seed = derive_seed(cfg.seed, {0x57});
    return std::make_unique<SingleTaskGpSurrogate>(s);
  }
  std::optional<Variant> expected;
  if (!variant.empty()) expected = parse_variant(variant);
  return load_surrogate(model_path, expected);
}

int cmd_gen(const Common& common, const std::string& out, std::optional<std::size_t> n_train,
            std::optional<std::size_t> n_val, std::optional<std::size_t> n_test, std::optional<std::size_t> pool) {
  RunConfig cfg = load_config(common);
  BenchmarkSpec spec = cfg.generation;
  spec.seed = cfg.seed;
  if (n_train) spec.n_train = *n_train;
  if (n_val) spec.n_val = *n_val;
  if (n_test) spec.n_test = *n_test;
  if (pool) spec.pool_size = *pool;
  cfg.generation = spec;
  cfg.paths.out = out;
  if (spec.pool_size < cfg.sampler.context_max + cfg.sampler.target_size + 1)
    throw cli::ConfigError("--pool must be at least context_max + target_size + 1 = " +
                           std::to_string(cfg.sampler.context_max + cfg.sampler.target_size + 1));
  const Benchmark b = generate_benchmark(spec);
  write_benchmark(out, b, spec);
  echo_config(out, "gen", cfg);
  std::cerr << "wrote " << b.train.size() << "/" << b.val.size() << "/" << b.test.size() << " tasks to " << out
            << "\n";
  return kOk;
}

int cmd_train(const Common& common, const std::string& data, const std::string& out, const std::string& variant,
              const std::string& surrogate) {
  RunConfig cfg = load_config(common);
  if (!variant.empty()) {
    auto v = parse_variant(variant);
    if (!v) throw cli::ConfigError("--variant must be aux or reward_only");
    cfg.model.variant = *v;
  }
  cfg.paths.data = data;
  cfg.paths.out = out;
  const Benchmark b = load_benchmark(data);
  require(!b.train.empty() && !b.val.empty(), "train: data directory needs train and val tasks");
  const Normalization norm = compute_normalization(b.train);
  const fs::path out_dir = dir_of(out);
  fs::create_directories(out_dir);
  echo_config(out_dir, "train", cfg);
  auto progress = [](const TrainLogRow& r) {
    std::cerr << "epoch " << r.epoch << " train_nll " << r.train_nll << " val_nll " << r.val_nll
              << (r.best ? " *" : "") << "\n";
  };

  if (surrogate == "dgp") {
    gp::DgpConfig dc = cfg.dgp.model;
    dc.input_dim = b.train.front().input_dim();
    gp::DgpTrainConfig tc = cfg.dgp.train;
    tc.seed = cfg.seed;
    tc.high_quantile = cfg.sampler.high_quantile;
    gp::DgpSelection sel = gp::select_dgp(b.train, b.val, norm, dc, tc, cfg.dgp.families, cfg.dgp.embedding_dims);
    std::ostringstream grid;
    grid << "family,embedding_dim,best_val_nll\n";
    for (const auto& g : sel.grid)
      grid << gp::family_name(g.family) << ',' << g.embedding_dim << ',' << cli::format_double(g.best_val_nll) << "\n";
    cli::write_text(out_dir / "dgp_grid.csv", grid.str());
    for (const auto& r : sel.best.log) progress(r);
    cli::write_text(out_dir / "train_log.csv", cli::train_log_csv(sel.best.log));
    gp::save_dgp(out, sel.best.model,
                 {{"seed", cfg.seed},
                  {"initial_val_nll", sel.best.initial_val_nll},
                  {"best_val_nll", sel.best.best_val_nll}});
    return kOk;
  }
  if (surrogate != "tnp") throw cli::ConfigError("--surrogate must be tnp or dgp");

  ModelConfig mc = cfg.model;
  mc.input_dim = b.train.front().input_dim();
  mc.aux_channels = b.train.front().aux_channels();
  SurrogateModel model(mc, norm, derive_seed(cfg.seed, {0x1417}));
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  const TrainResult res = train(model, b.train, b.val, cfg.sampler, tc, progress);
  cli::write_text(out_dir / "train_log.csv", cli::train_log_csv(res.log));
  save_model(out, model,
             {{"seed", cfg.seed},
              {"steps", res.steps},
              {"best_epoch", res.best_epoch},
              {"best_val_nll", res.best_val_nll}});
  return kOk;
}

std::vector<std::size_t> parse_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(tok, &pos);
    } catch (const std::exception&) {
      pos = std::string::npos;
    }
    if (pos != tok.size() || tok.empty()) throw cli::ConfigError("--sizes must be a comma-separated list of integers");
    out.push_back(v);
  }
  if (out.empty()) throw cli::ConfigError("--sizes is empty");
  return out;
}

const std::vector<TaskDataset>& split_of(const Benchmark& b, const std::string& split) {
  auto s = parse_split(split);
  if (!s) throw cli::ConfigError("--split must be train, val or test");
  return *s == Split::train ? b.train : *s == Split::val ? b.val : b.test;
}

int cmd_eval_pred(const Common& common, const std::string& model, bool stgp, const std::string& variant,
                  const std::string& data, const std::string& sizes, std::optional<std::size_t> repeats,
                  const std::string& split, const std::string& out) {
  RunConfig cfg = load_config(common);
  if (!sizes.empty()) cfg.protocol.sizes = parse_sizes(sizes);
  if (repeats) cfg.protocol.repeats = *repeats;
  for (std::size_t s : cfg.protocol.sizes)
    if (s < cfg.sampler.context_min || s > cfg.sampler.context_max)
      throw cli::ConfigError("context size " + std::to_string(s) + " outside sampler bounds [" +
                             std::to_string(cfg.sampler.context_min) + ", " + std::to_string(cfg.sampler.context_max) +
                             "]");
  cfg.paths.data = data;
  cfg.paths.out = out;
  auto surrogate = make_surrogate(model, stgp, variant, cfg);
  const Benchmark b = load_benchmark(data);
  const Normalization norm = compute_normalization(b.train);
  EvalConfig ec;
  ec.sizes = cfg.protocol.sizes;
  ec.repeats = cfg.protocol.repeats;
  ec.target_size = cfg.protocol.target_size;
  ec.seed = cfg.seed;
  ec.sampler = cfg.sampler;
  const auto rows = evaluate_prediction(*surrogate, split_of(b, split), norm, ec);
  cli::write_text(out, cli::eval_csv(surrogate->name(), rows, cfg.seed));
  echo_config(dir_of(out), "eval-pred", cfg);
  return kOk;
}

int cmd_optimize(const Common& common, const std::string& model, bool stgp, const std::string& variant,
                 const std::string& data, std::optional<std::size_t> trials, std::optional<std::size_t> runs,
                 std::optional<std::size_t> init, const std::string& acq, std::optional<std::size_t> max_tasks,
                 const std::string& split, const std::string& out) {
  RunConfig cfg = load_config(common);
  if (trials) cfg.protocol.trials = *trials;
  if (runs) cfg.protocol.runs = *runs;
  if (init) cfg.protocol.init_size = *init;
  if (!acq.empty()) {
    auto a = parse_acquisition(acq);
    if (!a) throw cli::ConfigError("--acq must be pi or greedy");
    cfg.protocol.acquisition = *a;
  }
  if (cfg.protocol.init_size < 1) throw cli::ConfigError("--init must be at least 1");
  cfg.paths.data = data;
  cfg.paths.out = out;
  auto surrogate = make_surrogate(model, stgp, variant, cfg);
  const Benchmark b = load_benchmark(data);
  const auto& tasks = split_of(b, split);
  const std::size_t n = max_tasks ? std::min(*max_tasks, tasks.size()) : tasks.size();
  BayesOptConfig bc{cfg.protocol.init_size, cfg.protocol.trials, cfg.protocol.acquisition, cfg.protocol.init_fraction};
  std::vector<OptimizationTrace> traces;
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t r = 0; r < cfg.protocol.runs; ++r)
      traces.push_back(bayesopt_run(*surrogate, tasks[t], bc, derive_seed(cfg.seed, {0xB0, t, r}), r));
    std::cerr << tasks[t].task_id << " regret " << traces.back().steps.back().regret << "\n";
  }
  cli::write_text(out, cli::optimize_csv(traces));
  echo_config(dir_of(out), "optimize", cfg);
  return kOk;
}

int cmd_report(const Common& common, const std::vector<std::string>& inputs, double threshold,
               const std::string& out) {
  RunConfig cfg = load_config(common);
  cfg.protocol.solved_threshold = threshold;
  cfg.paths.out = out;
  std::vector<OptimizationTrace> all;
  for (const auto& in : inputs) {
    auto t = cli::read_optimize_csv(in);
    all.insert(all.end(), t.begin(), t.end());
  }
  if (all.empty()) throw cli::ConfigError("report: input files contain no rows");
  cli::write_report(out, all, threshold);
  echo_config(out, "report", cfg);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"auxbo: few-shot surrogates with auxiliary feedback for Bayesian optimization"};
  app.require_subcommand(1);
  Common common;
  std::uint64_t seed_flag = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "JSON run configuration");
    sub->add_option("--seed", seed_flag, "Seed (overrides AUXBO_SEED and the config)");
    sub->add_option("--jobs", "Accepted for compatibility; commands run single-threaded");
  };

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic benchmark");
  add_common(gen);
  std::string gen_out;
  std::optional<std::size_t> g_train, g_val, g_test, g_pool;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--train", g_train, "Training tasks (default 200)");
  gen->add_option("--val", g_val, "Validation tasks (default 25)");
  gen->add_option("--test", g_test, "Test tasks (default 50)");
  gen->add_option("--pool", g_pool, "Designs per task (default 256)");

  // train
  auto* tr = app.add_subcommand("train", "Train a transformer or deep-kernel GP surrogate");
  add_common(tr);
  std::string tr_data, tr_out, tr_variant, tr_surrogate = "tnp";
  tr->add_option("--data", tr_data, "Benchmark directory")->required();
  tr->add_option("--out", tr_out, "Checkpoint path")->required();
  tr->add_option("--variant", tr_variant, "aux or reward_only")->check(CLI::IsMember({"aux", "reward_only"}));
  tr->add_option("--surrogate", tr_surrogate, "tnp or dgp")->check(CLI::IsMember({"tnp", "dgp"}));

  // eval-pred
  auto* ev = app.add_subcommand("eval-pred", "Prediction error over context sizes");
  add_common(ev);
  std::string ev_model, ev_variant, ev_data, ev_sizes, ev_out, ev_split = "test";
  bool ev_stgp = false;
  std::optional<std::size_t> ev_repeats;
  ev->add_option("--model", ev_model, "Checkpoint");
  ev->add_flag("--stgp", ev_stgp, "Use the single-task GP fit on each context");
  ev->add_option("--variant", ev_variant, "Expected checkpoint variant")->check(CLI::IsMember({"aux", "reward_only"}));
  ev->add_option("--data", ev_data, "Benchmark directory")->required();
  ev->add_option("--sizes", ev_sizes, "Context sizes, e.g. 5,10,20,30");
  ev->add_option("--repeats", ev_repeats, "Draws per task and size (default 10)");
  ev->add_option("--split", ev_split, "Task split (default test)");
  ev->add_option("--out", ev_out, "Output CSV")->required();

  // optimize
  auto* op = app.add_subcommand("optimize", "Discrete Bayesian optimization over each task's pool");
  add_common(op);
  std::string op_model, op_variant, op_data, op_acq, op_out, op_split = "test";
  bool op_stgp = false;
  std::optional<std::size_t> op_trials, op_runs, op_init, op_tasks;
  op->add_option("--model", op_model, "Checkpoint");
  op->add_flag("--stgp", op_stgp, "Use the single-task GP refit every trial");
  op->add_option("--variant", op_variant, "Expected checkpoint variant")->check(CLI::IsMember({"aux", "reward_only"}));
  op->add_option("--data", op_data, "Benchmark directory")->required();
  op->add_option("--trials", op_trials, "BO trials (default 30)");
  op->add_option("--runs", op_runs, "Runs per task (default 5)");
  op->add_option("--init", op_init, "Initial context size (default 5)");
  op->add_option("--acq", op_acq, "pi or greedy")->check(CLI::IsMember({"pi", "greedy"}));
  op->add_option("--tasks", op_tasks, "Only the first N tasks of the split");
  op->add_option("--split", op_split, "Task split (default test)");
  op->add_option("--out", op_out, "Output CSV")->required();

  // report
  auto* rp = app.add_subcommand("report", "Aggregate optimize CSVs into a table and SVG charts");
  add_common(rp);
  std::vector<std::string> rp_in;
  double rp_threshold = 0.5;
  std::string rp_out;
  rp->add_option("--in", rp_in, "Optimize CSV files")->required();
  rp->add_option("--solved-threshold", rp_threshold, "Regret threshold for 'solved' (default 0.5)");
  rp->add_option("--out", rp_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    for (CLI::App* sub : app.get_subcommands())
      if (sub->count("--seed")) common.seed = seed_flag;
    if (gen->parsed()) return cmd_gen(common, gen_out, g_train, g_val, g_test, g_pool);
    if (tr->parsed()) return cmd_train(common, tr_data, tr_out, tr_variant, tr_surrogate);
    if (ev->parsed())
      return cmd_eval_pred(common, ev_model, ev_stgp, ev_variant, ev_data, ev_sizes, ev_repeats, ev_split, ev_out);
    if (op->parsed())
      return cmd_optimize(common, op_model, op_stgp, op_variant, op_data, op_trials, op_runs, op_init, op_acq,
                          op_tasks, op_split, op_out);
    if (rp->parsed()) return cmd_report(common, rp_in, rp_threshold, rp_out);
  } catch (const cli::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const cli::SchemaError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == CheckpointError::Kind::config_conflict || e.kind() == CheckpointError::Kind::kind_mismatch
               ? kUsage
               : kIo;
  } catch (const NumericFailure& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const FormatError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const ContractViolation& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
