#pragma once

// Checkpoint file: "TAOF" magic, format version, JSON text header (spec,
// class list, branch mode, seed, grid metadata), then raw little-endian
// 32-bit floats in layer order (weights then bias per conv). Round-trips
// bit-exactly.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "taofcn/net.hpp"

namespace tao {

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline nlohmann::json spec_to_json(const NetworkSpec& spec) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : spec.layers) {
    switch (l.kind) {
      case LayerKind::Conv:
        layers.push_back({{"kind", "conv"}, {"k", l.k}, {"out", l.out_channels}});
        break;
      case LayerKind::BranchPool:
        layers.push_back({{"kind", "branch_pool"}});
        break;
      case LayerKind::StridedPool:
        layers.push_back({{"kind", "strided_pool"}});
        break;
      case LayerKind::Head:
        layers.push_back({{"kind", "head"}, {"out", l.out_channels}});
        break;
    }
  }
  return {{"name", spec.name},
          {"input_channels", spec.input_channels},
          {"branch_mode", to_string(spec.mode)},
          {"layers", layers}};
}

inline NetworkSpec spec_from_json(const nlohmann::json& j) {
  NetworkSpec spec;
  spec.name = j.at("name").get<std::string>();
  spec.input_channels = j.at("input_channels").get<int>();
  spec.mode = branch_mode_from_string(j.at("branch_mode").get<std::string>());
  for (const auto& jl : j.at("layers")) {
    const std::string kind = jl.at("kind").get<std::string>();
    if (kind == "conv")
      spec.layers.push_back(LayerSpec::conv(jl.at("k").get<int>(), jl.at("out").get<int>()));
    else if (kind == "branch_pool")
      spec.layers.push_back(LayerSpec::branch_pool());
    else if (kind == "strided_pool")
      spec.layers.push_back(LayerSpec::strided_pool());
    else if (kind == "head")
      spec.layers.push_back(LayerSpec::head(jl.at("out").get<int>()));
    else
      throw std::runtime_error("checkpoint: unknown layer kind " + kind);
  }
  spec.validate();
  return spec;
}

struct Checkpoint {
  NetworkSpec spec;
  Params params;
  std::uint64_t seed = 0;
};

inline void save_checkpoint(const std::string& path, const NetworkSpec& spec,
                            const Params& params, std::uint64_t seed) {
  const FieldInfo f = receptive_field(spec);
  nlohmann::json header = {{"spec", spec_to_json(spec)},
                           {"classes", std::string(kClasses)},
                           {"seed", seed},
                           {"receptive_field", f.r},
                           {"output_stride", f.stride}};
  const std::string htext = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out.write("TAOF", 4);
  auto write_u32 = [&out](std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
  };
  write_u32(kCheckpointVersion);
  write_u32(static_cast<std::uint32_t>(htext.size()));
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  static_assert(sizeof(float) == 4);
  for (const auto& k : params.kernels) {
    out.write(reinterpret_cast<const char*>(k.weights.data()),
              static_cast<std::streamsize>(k.weights.size() * 4));
    out.write(reinterpret_cast<const char*>(k.bias.data()),
              static_cast<std::streamsize>(k.bias.size() * 4));
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "TAOF", 4) != 0)
    throw std::runtime_error("not a checkpoint file (bad magic): " + path);
  auto read_u32 = [&in, &path]() {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("truncated checkpoint: " + path);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
  };
  const std::uint32_t version = read_u32();
  if (version != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(version));
  const std::uint32_t hlen = read_u32();
  std::string htext(hlen, '\0');
  in.read(htext.data(), hlen);
  if (!in) throw std::runtime_error("truncated checkpoint header: " + path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(htext);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("malformed checkpoint header: " + std::string(e.what()));
  }
  Checkpoint ck;
  ck.spec = spec_from_json(header.at("spec"));
  ck.seed = header.at("seed").get<std::uint64_t>();
  const std::string classes = header.at("classes").get<std::string>();
  if (classes != kClasses)
    throw std::runtime_error("checkpoint class list mismatch: " + classes);
  ck.params = make_params<float>(ck.spec);
  for (auto& k : ck.params.kernels) {
    in.read(reinterpret_cast<char*>(k.weights.data()),
            static_cast<std::streamsize>(k.weights.size() * 4));
    in.read(reinterpret_cast<char*>(k.bias.data()),
            static_cast<std::streamsize>(k.bias.size() * 4));
    if (!in) throw std::runtime_error("truncated checkpoint parameters: " + path);
  }
  return ck;
}

}  // namespace tao
