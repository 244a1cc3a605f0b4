#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "auxbo/tasks/dataset.hpp"

namespace auxbo {

/// Malformed dataset line. Carries the 1-based line number and the field path.
class FormatError : public std::runtime_error {
 public:
  FormatError(std::string path, std::size_t line, std::string field, const std::string& what)
      : std::runtime_error(path + ":" + std::to_string(line) + ": field '" + field + "': " + what),
        path_(std::move(path)),
        line_(line),
        field_(std::move(field)) {}
  const std::string& path() const { return path_; }
  std::size_t line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  std::string path_;
  std::size_t line_;
  std::string field_;
};

namespace detail {

using ojson = nlohmann::ordered_json;

struct LineReader {
  const std::string& path;
  std::size_t line;

  [[noreturn]] void fail(const std::string& field, const std::string& what) const {
    throw FormatError(path, line, field, what);
  }

  const nlohmann::json& member(const nlohmann::json& obj, const char* key, const std::string& field) const {
    if (!obj.is_object()) fail(field, "expected object");
    auto it = obj.find(key);
    if (it == obj.end()) fail(field.empty() ? key : field + "." + key, "missing");
    return *it;
  }

  double number(const nlohmann::json& v, const std::string& field) const {
    if (!v.is_number()) fail(field, "expected number");
    return v.get<double>();
  }

  std::vector<double> numbers(const nlohmann::json& v, const std::string& field) const {
    if (!v.is_array()) fail(field, "expected array of numbers");
    std::vector<double> out;
    out.reserve(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(number(v[i], field + "[" + std::to_string(i) + "]"));
    return out;
  }
};

inline ojson task_to_json(const TaskDataset& t) {
  ojson j;
  j["task_id"] = t.task_id;
  j["split"] = split_name(t.split);
  if (t.theta) j["theta"] = ojson{{"k", t.theta->k}, {"c", t.theta->c}, {"m", t.theta->m}, {"g0", t.theta->g0}};
  j["max_f"] = t.max_f;
  ojson designs = ojson::array();
  for (const auto& r : t.records) {
    ojson h = ojson::array();
    for (std::size_t s = 0; s < r.h.steps(); ++s)
      h.push_back(std::vector<double>(r.h.step(s), r.h.step(s) + r.h.channels));
    designs.push_back(ojson{{"x", r.x}, {"f", r.f}, {"h", std::move(h)}});
  }
  j["designs"] = std::move(designs);
  return j;
}

inline TaskDataset task_from_json(const nlohmann::json& j, const LineReader& rd) {
  TaskDataset t;
  const auto& id = rd.member(j, "task_id", "");
  if (!id.is_string()) rd.fail("task_id", "expected string");
  t.task_id = id.get<std::string>();
  const auto& sp = rd.member(j, "split", "");
  if (!sp.is_string() || !parse_split(sp.get<std::string>())) rd.fail("split", "expected \"train\", \"val\" or \"test\"");
  t.split = *parse_split(sp.get<std::string>());
  if (j.contains("theta")) {
    const auto& th = j["theta"];
    t.theta = Theta{rd.number(rd.member(th, "k", "theta"), "theta.k"), rd.number(rd.member(th, "c", "theta"), "theta.c"),
                    rd.number(rd.member(th, "m", "theta"), "theta.m"),
                    rd.number(rd.member(th, "g0", "theta"), "theta.g0")};
  }
  const double max_f = rd.number(rd.member(j, "max_f", ""), "max_f");
  const auto& designs = rd.member(j, "designs", "");
  if (!designs.is_array()) rd.fail("designs", "expected array");
  for (std::size_t i = 0; i < designs.size(); ++i) {
    const std::string base = "designs[" + std::to_string(i) + "]";
    const auto& d = designs[i];
    TrialRecord r;
    r.x = rd.numbers(rd.member(d, "x", base), base + ".x");
    r.f = rd.number(rd.member(d, "f", base), base + ".f");
    const auto& h = rd.member(d, "h", base);
    if (!h.is_array()) rd.fail(base + ".h", "expected array of steps");
    for (std::size_t s = 0; s < h.size(); ++s) {
      const std::string hf = base + ".h[" + std::to_string(s) + "]";
      auto step = rd.numbers(h[s], hf);
      if (s == 0) r.h.channels = step.size();
      if (step.size() != r.h.channels || step.empty()) rd.fail(hf, "inconsistent channel count");
      r.h.values.insert(r.h.values.end(), step.begin(), step.end());
      if (!r.h.terminated_at && step.back() >= 0.5) r.h.terminated_at = s;
    }
    if (!t.records.empty()) {
      if (r.x.size() != t.records.front().x.size()) rd.fail(base + ".x", "design dimension differs from first design");
      if (r.h.channels != 0 && t.records.front().h.channels != 0 && r.h.channels != t.records.front().h.channels)
        rd.fail(base + ".h", "channel count differs from first design");
    }
    t.records.push_back(std::move(r));
  }
  // sequences that are empty inherit the task's channel count
  std::size_t ch = 0;
  for (const auto& r : t.records) ch = std::max(ch, r.h.channels);
  for (auto& r : t.records) r.h.channels = ch;
  t.refresh_max();
  if (t.records.empty() ? max_f != 0.0 : t.max_f != max_f) rd.fail("max_f", "does not equal the maximum design reward");
  return t;
}

}  // namespace detail

/// JSON-lines, one task per line. Doubles are written in shortest
/// round-trip form so load(write(x)) == x exactly.
inline void write_tasks(const std::filesystem::path& path, const std::vector<TaskDataset>& tasks) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  for (const auto& t : tasks) out << detail::task_to_json(t).dump() << '\n';
  out.flush();
  if (!out) throw IoError(path.string(), "write failed");
}

inline std::vector<TaskDataset> load_tasks(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  std::vector<TaskDataset> tasks;
  std::string line;
  std::size_t lineno = 0;
  const std::string p = path.string();
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    detail::LineReader rd{p, lineno};
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      rd.fail("<line>", std::string("invalid JSON: ") + e.what());
    }
    tasks.push_back(detail::task_from_json(j, rd));
  }
  if (in.bad()) throw IoError(p, "read failed");
  return tasks;
}

}  // namespace auxbo
