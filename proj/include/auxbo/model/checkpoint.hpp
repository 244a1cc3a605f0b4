#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "auxbo/model/surrogate_model.hpp"

namespace auxbo {

/// Binary model container:
///   "AUXBO-MODEL" | u32 version | u32 kind | u64 len | JSON header (len bytes)
///   | u64 n_params | per param: u32 name_len, name, u32 rank, u64 dims[rank], f64 data[]
///   | "END\0"
/// All integers and doubles little-endian.
inline constexpr char kModelMagic[] = "AUXBO-MODEL";
inline constexpr std::uint32_t kModelFormatVersion = 1;

enum class ModelKind : std::uint32_t { tnp = 1, dgp = 2 };

inline const char* model_kind_name(ModelKind k) { return k == ModelKind::tnp ? "tnp" : "dgp"; }

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { io, bad_magic, version_mismatch, truncated, corrupt, kind_mismatch, config_conflict };
  CheckpointError(Kind kind, const std::string& path, const std::string& what)
      : std::runtime_error(path + ": " + what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct ModelFile {
  ModelKind kind = ModelKind::tnp;
  nlohmann::ordered_json header;
  std::vector<Parameter> params;
};

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

class CheckpointReader {
 public:
  CheckpointReader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}

  template <class T>
  T get(const char* what) {
    T v;
    bytes(reinterpret_cast<char*>(&v), sizeof v, what);
    return v;
  }

  void bytes(char* dst, std::size_t n, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw CheckpointError(CheckpointError::Kind::truncated, path_, std::string("truncated file while reading ") + what);
  }

  const std::string& path() const { return path_; }

 private:
  std::istream& in_;
  std::string path_;
};

}  // namespace detail

inline void write_model_file(const std::filesystem::path& path, const ModelFile& mf) {
  std::ostringstream buf(std::ios::binary);
  buf.write(kModelMagic, sizeof kModelMagic - 1);
  detail::put<std::uint32_t>(buf, kModelFormatVersion);
  detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(mf.kind));
  const std::string hdr = mf.header.dump();
  detail::put<std::uint64_t>(buf, hdr.size());
  buf.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
  detail::put<std::uint64_t>(buf, mf.params.size());
  for (const Parameter& p : mf.params) {
    detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(p.name.size()));
    buf.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape) detail::put<std::uint64_t>(buf, d);
    buf.write(reinterpret_cast<const char*>(p.value.data.data()),
              static_cast<std::streamsize>(p.value.data.size() * sizeof(double)));
  }
  buf.write("END", 4);

  // write to a sibling temp file then rename, so a crash never leaves a partial checkpoint
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(tmp.string(), "cannot open for writing");
    const std::string s = buf.str();
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
    if (!out) throw IoError(tmp.string(), "write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError(path.string(), "cannot rename checkpoint into place: " + ec.message());
}

inline ModelFile read_model_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::io, path.string(), "cannot open for reading");
  detail::CheckpointReader rd(in, path.string());
  char magic[sizeof kModelMagic - 1];
  in.read(magic, sizeof magic);
  if (static_cast<std::size_t>(in.gcount()) != sizeof magic || std::memcmp(magic, kModelMagic, sizeof magic) != 0)
    throw CheckpointError(CheckpointError::Kind::bad_magic, rd.path(), "not a model file (bad magic)");
  const auto version = rd.get<std::uint32_t>("version");
  if (version != kModelFormatVersion)
    throw CheckpointError(CheckpointError::Kind::version_mismatch, rd.path(),
                          "format version " + std::to_string(version) + ", expected " +
                              std::to_string(kModelFormatVersion));
  ModelFile mf;
  const auto kind = rd.get<std::uint32_t>("kind");
  if (kind != 1 && kind != 2)
    throw CheckpointError(CheckpointError::Kind::corrupt, rd.path(), "unknown model kind " + std::to_string(kind));
  mf.kind = static_cast<ModelKind>(kind);
  const auto hlen = rd.get<std::uint64_t>("header length");
  if (hlen > (1u << 24)) throw CheckpointError(CheckpointError::Kind::corrupt, rd.path(), "implausible header length");
  std::string hdr(hlen, '\0');
  rd.bytes(hdr.data(), hlen, "header");
  try {
    mf.header = nlohmann::ordered_json::parse(hdr);
  } catch (const nlohmann::json::parse_error& e) {
    throw CheckpointError(CheckpointError::Kind::corrupt, rd.path(), std::string("bad header JSON: ") + e.what());
  }
  const auto n = rd.get<std::uint64_t>("parameter count");
  if (n > (1u << 20)) throw CheckpointError(CheckpointError::Kind::corrupt, rd.path(), "implausible parameter count");
  for (std::uint64_t i = 0; i < n; ++i) {
    Parameter p;
    const auto nl = rd.get<std::uint32_t>("parameter name length");
    if (nl > 4096) throw CheckpointError(CheckpointError::Kind::corrupt, rd.path(), "implausible name length");
    p.name.resize(nl);
    rd.bytes(p.name.data(), nl, "parameter name");
    const auto rank = rd.get<std::uint32_t>("parameter rank");
    if (rank > 8) throw CheckpointError(CheckpointError::Kind::corrupt, rd.path(), "implausible rank");
    Shape shape(rank);
    for (auto& d : shape) d = rd.get<std::uint64_t>("parameter dims");
    const std::size_t numel = shape_numel(shape);
    if (numel > (1u << 28)) throw CheckpointError(CheckpointError::Kind::corrupt, rd.path(), "implausible tensor size");
    std::vector<double> data(numel);
    rd.bytes(reinterpret_cast<char*>(data.data()), numel * sizeof(double), "parameter data");
    p.value = Tensor(std::move(shape), std::move(data));
    mf.params.push_back(std::move(p));
  }
  char end[4];
  rd.bytes(end, 4, "end marker");
  if (std::memcmp(end, "END", 4) != 0)
    throw CheckpointError(CheckpointError::Kind::corrupt, rd.path(), "missing end marker");
  return mf;
}

/// Copies file parameters into `store`, matching by position, name and shape.
inline void restore_parameters(ParameterStore& store, const std::vector<Parameter>& params, const std::string& path) {
  if (params.size() != store.size())
    throw CheckpointError(CheckpointError::Kind::config_conflict, path,
                          "file has " + std::to_string(params.size()) + " parameters, model expects " +
                              std::to_string(store.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& dst = store[i];
    if (dst.name != params[i].name || dst.value.shape != params[i].value.shape)
      throw CheckpointError(CheckpointError::Kind::config_conflict, path,
                            "parameter " + std::to_string(i) + " is " + params[i].name +
                                shape_str(params[i].value.shape) + ", model expects " + dst.name +
                                shape_str(dst.value.shape));
    dst.value.data = params[i].value.data;
  }
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.aux_channels = j.at("aux_channels").get<std::size_t>();
  c.model_dim = j.at("model_dim").get<std::size_t>();
  c.predictor_layers = j.at("predictor_layers").get<std::size_t>();
  c.sequence_encoder_layers = j.at("sequence_encoder_layers").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.ffn_dim = j.at("ffn_dim").get<std::size_t>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.sigma_floor = j.at("sigma_floor").get<double>();
  auto v = parse_variant(j.at("variant").get<std::string>());
  if (!v) throw std::invalid_argument("unknown variant " + j.at("variant").get<std::string>());
  c.variant = *v;
  return c;
}

/// `extra` is stored in the header under "meta" (training provenance etc.).
inline void save_model(const std::filesystem::path& path, const SurrogateModel& model,
                       const nlohmann::ordered_json& extra = nlohmann::ordered_json::object()) {
  ModelFile mf;
  mf.kind = ModelKind::tnp;
  mf.header["config"] = to_json(model.config());
  mf.header["normalization"] = to_json(model.normalization());
  mf.header["meta"] = extra;
  mf.params.assign(model.parameters().begin(), model.parameters().end());
  write_model_file(path, mf);
}

/// Loads a transformer checkpoint. If `expected_variant` is given and differs
/// from the stored one, throws config_conflict.
inline SurrogateModel load_model(const std::filesystem::path& path,
                                 std::optional<Variant> expected_variant = std::nullopt) {
  ModelFile mf = read_model_file(path);
  if (mf.kind != ModelKind::tnp)
    throw CheckpointError(CheckpointError::Kind::kind_mismatch, path.string(),
                          std::string("file holds a ") + model_kind_name(mf.kind) + " model, expected tnp");
  ModelConfig cfg;
  Normalization norm;
  try {
    cfg = model_config_from_json(mf.header.at("config"));
    norm = normalization_from_json(mf.header.at("normalization"));
  } catch (const std::exception& e) {
    throw CheckpointError(CheckpointError::Kind::corrupt, path.string(), std::string("bad header: ") + e.what());
  }
  if (expected_variant && *expected_variant != cfg.variant)
    throw CheckpointError(CheckpointError::Kind::config_conflict, path.string(),
                          std::string("checkpoint variant is ") + variant_name(cfg.variant) + ", requested " +
                              variant_name(*expected_variant));
  SurrogateModel model(cfg, norm, 0);
  restore_parameters(model.parameters(), mf.params, path.string());
  return model;
}

inline nlohmann::ordered_json read_model_meta(const std::filesystem::path& path) {
  ModelFile mf = read_model_file(path);
  return mf.header.contains("meta") ? mf.header["meta"] : nlohmann::ordered_json::object();
}

}  // namespace auxbo
