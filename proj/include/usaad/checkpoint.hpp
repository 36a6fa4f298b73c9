#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "usaad/core/errors.hpp"
#include "usaad/core/tensor.hpp"

namespace usaad {

// Single-file checkpoint: 8-byte magic, little-endian u64 header length, a
// JSON header (config, iteration, RNG and sampler state, blob index), then
// raw float32 blobs in index order. Blobs are keyed by canonical parameter
// names; the map keeps them sorted so save -> load -> save is byte-identical.
struct Checkpoint {
  nlohmann::json header;
  std::map<std::string, Tensor<float>> blobs;

  static constexpr char kMagic[9] = "USAADCP1";

  void save(const std::filesystem::path& path) const {
    nlohmann::json hdr = header;
    nlohmann::json index = nlohmann::json::array();
    for (const auto& [name, t] : blobs) {
      index.push_back({{"name", name}, {"shape", {t.n(), t.c(), t.h(), t.w()}}});
    }
    hdr["blobs"] = index;
    const std::string hs = hdr.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write checkpoint: " + path.string());
    f.write(kMagic, 8);
    std::uint64_t len = hs.size();
    f.write(reinterpret_cast<const char*>(&len), sizeof(len));
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& [name, t] : blobs) {
      f.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.numel() * sizeof(float)));
    }
    if (!f) throw DataError("short write to checkpoint: " + path.string());
  }

  static Checkpoint load(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open checkpoint: " + path.string());
    char magic[8];
    f.read(magic, 8);
    if (!f || std::string(magic, 8) != std::string(kMagic, 8))
      throw DataError("not a checkpoint file: " + path.string());
    std::uint64_t len = 0;
    f.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string hs(len, '\0');
    f.read(hs.data(), static_cast<std::streamsize>(len));
    if (!f) throw DataError("truncated checkpoint header: " + path.string());

    Checkpoint ck;
    try {
      ck.header = nlohmann::json::parse(hs);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("corrupt checkpoint header: " + std::string(e.what()));
    }
    for (const auto& entry : ck.header.at("blobs")) {
      const std::string name = entry.at("name");
      const auto& sh = entry.at("shape");
      Tensor<float> t(sh[0].get<int>(), sh[1].get<int>(), sh[2].get<int>(), sh[3].get<int>());
      f.read(reinterpret_cast<char*>(t.data()),
             static_cast<std::streamsize>(t.numel() * sizeof(float)));
      if (!f) throw DataError("truncated checkpoint blob: " + name);
      ck.blobs.emplace(name, std::move(t));
    }
    ck.header.erase("blobs");
    return ck;
  }
};

}  // namespace usaad
