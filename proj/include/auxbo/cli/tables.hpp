#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "auxbo/cli/svg.hpp"
#include "auxbo/engine/aggregate.hpp"
#include "auxbo/engine/evaluate.hpp"

namespace auxbo::cli {

inline constexpr const char* kEvalHeader = "surrogate,context_size,mse_sum,nll_mean,n_tasks,n_repeats,seed";
inline constexpr const char* kOptimizeHeader =
    "surrogate,acq,task_id,run,trial,selected_index,observed_f,best_f,regret";
inline constexpr const char* kReportHeader = "trial,surrogate,mean_norm_best,mean_regret,frac_solved";
inline constexpr const char* kTrainLogHeader = "epoch,train_nll,val_nll,best_flag";

/// A CSV input whose header or rows do not match the expected schema.
class SchemaError : public std::runtime_error {
 public:
  SchemaError(const std::string& path, const std::string& what) : std::runtime_error(path + ": " + what) {}
};

/// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError(path.parent_path().string(), "cannot create directory: " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out << text;
  out.flush();
  if (!out) throw IoError(path.string(), "write failed");
}

inline std::string eval_csv(const std::string& surrogate, const std::vector<PredictionMetrics>& rows,
                            std::uint64_t seed) {
  std::ostringstream o;
  o << kEvalHeader << '\n';
  for (const auto& m : rows)
    o << surrogate << ',' << m.context_size << ',' << format_double(m.mse_sum) << ',' << format_double(m.nll_mean)
      << ',' << m.n_tasks << ',' << m.n_repeats << ',' << seed << '\n';
  return o.str();
}

inline std::string optimize_csv(const std::vector<OptimizationTrace>& traces) {
  std::ostringstream o;
  o << kOptimizeHeader << '\n';
  for (const auto& t : traces)
    for (const auto& s : t.steps)
      o << t.surrogate << ',' << acquisition_name(t.acquisition) << ',' << t.task_id << ',' << t.run << ','
        << s.trial << ',' << s.selected_index << ',' << format_double(s.observed_f) << ','
        << format_double(s.best_f) << ',' << format_double(s.regret) << '\n';
  return o.str();
}

inline std::string train_log_csv(const std::vector<TrainLogRow>& log) {
  std::ostringstream o;
  o << kTrainLogHeader << '\n';
  for (const auto& r : log)
    o << r.epoch << ',' << format_double(r.train_nll) << ',' << format_double(r.val_nll) << ',' << (r.best ? 1 : 0)
      << '\n';
  return o.str();
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

template <class T>
T parse_field(const std::string& s, const std::string& path, std::size_t line, const char* field) {
  T v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw SchemaError(path, "line " + std::to_string(line) + ": bad value '" + s + "' in column " + field);
  return v;
}

}  // namespace detail

/// Reads an optimize CSV back into traces (max_f is best_f + regret).
inline std::vector<OptimizationTrace> read_optimize_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  const std::string p = path.string();
  std::string line;
  if (!std::getline(in, line)) throw SchemaError(p, "empty file, expected header '" + std::string(kOptimizeHeader) + "'");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kOptimizeHeader)
    throw SchemaError(p, "header '" + line + "' does not match '" + std::string(kOptimizeHeader) + "'");
  std::vector<OptimizationTrace> traces;
  std::map<std::tuple<std::string, std::string, std::string, std::size_t>, std::size_t> index;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto f = detail::split_csv(line);
    if (f.size() != 9) throw SchemaError(p, "line " + std::to_string(lineno) + ": expected 9 columns");
    auto acq = parse_acquisition(f[1]);
    if (!acq) throw SchemaError(p, "line " + std::to_string(lineno) + ": unknown acquisition '" + f[1] + "'");
    const auto run = detail::parse_field<std::size_t>(f[3], p, lineno, "run");
    auto key = std::make_tuple(f[0], f[1], f[2], run);
    auto it = index.find(key);
    if (it == index.end()) {
      OptimizationTrace t;
      t.surrogate = f[0];
      t.acquisition = *acq;
      t.task_id = f[2];
      t.run = run;
      it = index.emplace(key, traces.size()).first;
      traces.push_back(std::move(t));
    }
    OptimizationTrace& t = traces[it->second];
    TraceStep s;
    s.trial = detail::parse_field<int>(f[4], p, lineno, "trial");
    s.selected_index = detail::parse_field<std::size_t>(f[5], p, lineno, "selected_index");
    s.observed_f = detail::parse_field<double>(f[6], p, lineno, "observed_f");
    s.best_f = detail::parse_field<double>(f[7], p, lineno, "best_f");
    s.regret = detail::parse_field<double>(f[8], p, lineno, "regret");
    t.max_f = s.best_f + s.regret;
    t.steps.push_back(s);
  }
  if (in.bad()) throw IoError(p, "read failed");
  return traces;
}

/// Series label for a trace: the surrogate, qualified by acquisition when
/// more than one acquisition appears for it.
inline std::map<std::string, std::vector<OptimizationTrace>> group_traces(const std::vector<OptimizationTrace>& all) {
  std::map<std::string, std::set<std::string>> acqs;
  for (const auto& t : all) acqs[t.surrogate].insert(acquisition_name(t.acquisition));
  std::map<std::string, std::vector<OptimizationTrace>> out;
  for (const auto& t : all) {
    const std::string label =
        acqs[t.surrogate].size() > 1 ? t.surrogate + "-" + acquisition_name(t.acquisition) : t.surrogate;
    out[label].push_back(t);
  }
  return out;
}

/// Writes aggregate.csv plus one SVG chart per metric into `dir`.
inline void write_report(const std::filesystem::path& dir, const std::vector<OptimizationTrace>& traces,
                         double solved_threshold) {
  require(!traces.empty(), "report: no traces");
  const auto groups = group_traces(traces);
  std::ostringstream csv;
  csv << kReportHeader << '\n';
  std::vector<Series> norm, regret, solved;
  for (const auto& [label, ts] : groups) {
    const AggregateSummary s = aggregate_runs(ts, {solved_threshold});
    Series a{label, {}, {}}, b{label, {}, {}}, c{label, {}, {}};
    for (const auto& r : s.rows) {
      csv << r.trial << ',' << label << ',' << format_double(r.mean_norm_best) << ','
          << format_double(r.mean_regret) << ',' << format_double(r.frac_solved[0]) << '\n';
      a.x.push_back(r.trial);
      a.y.push_back(r.mean_norm_best);
      b.x.push_back(r.trial);
      b.y.push_back(r.mean_regret);
      c.x.push_back(r.trial);
      c.y.push_back(r.frac_solved[0]);
    }
    norm.push_back(std::move(a));
    regret.push_back(std::move(b));
    solved.push_back(std::move(c));
  }
  write_text(dir / "aggregate.csv", csv.str());
  write_text(dir / "mean_norm_best.svg", line_chart_svg("Best reward / max reward", "trial", "mean normalized best", norm));
  write_text(dir / "mean_regret.svg", line_chart_svg("Regret", "trial", "mean regret", regret));
  write_text(dir / "frac_solved.svg",
             line_chart_svg("Tasks solved (regret <= " + format_double(solved_threshold) + ")", "trial",
                            "fraction solved", solved));
}

}  // namespace auxbo::cli
