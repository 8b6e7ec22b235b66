#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <json.hpp>

#include "xfer/error.hpp"
#include "xfer/hash.hpp"
#include "xfer/model/bundle.hpp"

namespace xfer::model {

// Checkpoint container, little-endian:
//
//   magic        8 bytes  "XFERCKPT"
//   version      u32      kCheckpointVersion
//   scalar_size  u32      4 (float) or 8 (double)
//   header_size  u64
//   header       JSON: {"encoder_config": {...},
//                       "heads": [{"format": ..., "labels": [...]}, ...],
//                       "tensors": [{"name": ..., "rows": r, "cols": c}, ...]}
//   payload      tensors in header order, row-major, scalar_size bytes each
//   checksum     u64      FNV-1a 64 of every preceding byte
//
// Tensor names follow the bundle's for_each_param order ("embeddings.token",
// "layer0.query.weight", ..., "head.<format>.out.bias").

inline constexpr char kCheckpointMagic[8] = {'X', 'F', 'E', 'R', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_bytes(std::string& out, const void* p, std::size_t n) {
  out.append(static_cast<const char*>(p), n);
}
template <typename V>
void put(std::string& out, V v) {
  put_bytes(out, &v, sizeof(V));
}
template <typename V>
V get(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(V) > in.size()) throw CheckpointError("checkpoint truncated");
  V v;
  std::memcpy(&v, in.data() + pos, sizeof(V));
  pos += sizeof(V);
  return v;
}

}  // namespace detail

template <typename T>
std::string serialize_checkpoint(const ModelBundle<T>& bundle) {
  nlohmann::json header;
  header["encoder_config"] = to_json(bundle.config());
  header["heads"] = nlohmann::json::array();
  for (const auto& [fmt, h] : bundle.heads())
    header["heads"].push_back({{"format", std::string(corpus::to_string(fmt))}, {"labels", h.labels()}});
  header["tensors"] = nlohmann::json::array();
  bundle.for_each_param([&](const std::string& name, const Param<T>& p) {
    header["tensors"].push_back({{"name", name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}});
  });
  const std::string header_text = header.dump();

  std::string out;
  detail::put_bytes(out, kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put<std::uint32_t>(out, kCheckpointVersion);
  detail::put<std::uint32_t>(out, sizeof(T));
  detail::put<std::uint64_t>(out, header_text.size());
  out += header_text;
  bundle.for_each_param([&](const std::string&, const Param<T>& p) {
    detail::put_bytes(out, p.value.data(), static_cast<std::size_t>(p.value.size()) * sizeof(T));
  });
  Fnv1a64 h;
  h.update(out);
  detail::put<std::uint64_t>(out, h.digest());
  return out;
}

template <typename T>
void save_checkpoint(const ModelBundle<T>& bundle, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::string bytes = serialize_checkpoint(bundle);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

/// Parses a checkpoint. When `expected` is given, a differing stored encoder
/// configuration is rejected with both configurations in the message. A float
/// checkpoint may be loaded into a double bundle and vice versa.
template <typename T>
ModelBundle<T> deserialize_checkpoint(const std::string& bytes, const EncoderConfig* expected = nullptr) {
  constexpr std::size_t kFixed = sizeof(kCheckpointMagic) + 4 + 4 + 8;
  if (bytes.size() < kFixed + 8) throw CheckpointError("checkpoint truncated");
  std::uint64_t stored_sum;
  std::memcpy(&stored_sum, bytes.data() + bytes.size() - 8, 8);
  Fnv1a64 h;
  h.update(bytes.data(), bytes.size() - 8);
  if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
    throw CheckpointError("not a checkpoint file (bad magic)");
  std::size_t pos = sizeof(kCheckpointMagic);
  const auto version = detail::get<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion)
    throw CheckpointVersionError("checkpoint format version " + std::to_string(version) +
                                 " cannot be read by this build (expects version " +
                                 std::to_string(kCheckpointVersion) +
                                 "); re-export it with the matching release before loading");
  if (h.digest() != stored_sum) throw CheckpointError("checkpoint checksum mismatch (file truncated or corrupted)");
  const auto scalar_size = detail::get<std::uint32_t>(bytes, pos);
  if (scalar_size != 4 && scalar_size != 8) throw CheckpointError("unsupported scalar size in checkpoint");
  const auto header_size = detail::get<std::uint64_t>(bytes, pos);
  if (pos + header_size > bytes.size() - 8) throw CheckpointError("checkpoint truncated");
  const auto header = nlohmann::json::parse(bytes.substr(pos, header_size));
  pos += header_size;

  const EncoderConfig config = encoder_config_from_json(header.at("encoder_config"));
  if (expected && !(*expected == config))
    throw ConfigError("checkpoint encoder config does not match the run's config\n  checkpoint: " +
                      to_json(config).dump() + "\n  run:        " + to_json(*expected).dump());

  ModelBundle<T> bundle = init_encoder<T>(config, 0);
  for (const auto& hj : header.at("heads"))
    bundle.reinit_head(corpus::parse_format(hj.at("format").get<std::string>()), 0,
                       hj.at("labels").get<std::vector<std::string>>());

  std::vector<std::pair<std::string, Param<T>*>> params;
  bundle.for_each_param([&](const std::string& name, Param<T>& p) { params.emplace_back(name, &p); });
  const auto& tensors = header.at("tensors");
  if (tensors.size() != params.size()) throw CheckpointError("checkpoint tensor list does not match its heads");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& tj = tensors[i];
    auto& p = *params[i].second;
    if (tj.at("name").get<std::string>() != params[i].first || tj.at("rows").get<Eigen::Index>() != p.value.rows() ||
        tj.at("cols").get<Eigen::Index>() != p.value.cols())
      throw CheckpointError("checkpoint tensor '" + tj.at("name").get<std::string>() + "' has unexpected layout");
    const auto count = static_cast<std::size_t>(p.value.size());
    if (pos + count * scalar_size > bytes.size() - 8) throw CheckpointError("checkpoint truncated");
    for (std::size_t k = 0; k < count; ++k) {
      if (scalar_size == 4) {
        float v;
        std::memcpy(&v, bytes.data() + pos + k * 4, 4);
        p.value.data()[k] = static_cast<T>(v);
      } else {
        double v;
        std::memcpy(&v, bytes.data() + pos + k * 8, 8);
        p.value.data()[k] = static_cast<T>(v);
      }
    }
    pos += count * scalar_size;
  }
  if (pos != bytes.size() - 8) throw CheckpointError("checkpoint has trailing bytes");
  return bundle;
}

template <typename T>
ModelBundle<T> load_checkpoint(const std::filesystem::path& path, const EncoderConfig* expected = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint<T>(bytes, expected);
}

}  // namespace xfer::model
