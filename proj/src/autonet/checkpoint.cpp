#include "rgrl/autonet/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <json.hpp>

namespace rgrl::autonet {

namespace {

static_assert(sizeof(double) == 8);

void put_le(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), 8);
}

double get_le(const unsigned char* buf) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const std::vector<Parameter*>& params) {
  std::filesystem::create_directories(dir);
  std::ofstream bin(dir / "params.bin", std::ios::binary | std::ios::trunc);
  if (!bin) throw CheckpointError("cannot write " + (dir / "params.bin").string());
  nlohmann::json manifest;
  manifest["format_version"] = 1;
  manifest["dtype"] = "float64";
  manifest["byte_order"] = "little";
  auto& entries = manifest["parameters"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto* p : params) {
    entries.push_back({{"name", p->name},
                       {"shape", {p->value.rows(), p->value.cols()}},
                       {"offset", offset}});
    for (Index i = 0; i < p->value.size(); ++i) put_le(bin, p->value.data()[i]);
    offset += p->size();
  }
  manifest["total_values"] = offset;
  if (!bin) throw CheckpointError("write failed for " + (dir / "params.bin").string());
  std::ofstream js(dir / "manifest.json", std::ios::trunc);
  if (!js) throw CheckpointError("cannot write " + (dir / "manifest.json").string());
  js << manifest.dump(2) << "\n";
}

void load_checkpoint(const std::filesystem::path& dir, const std::vector<Parameter*>& params) {
  std::ifstream js(dir / "manifest.json");
  if (!js) throw CheckpointError("missing " + (dir / "manifest.json").string());
  nlohmann::json manifest;
  try {
    js >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("manifest.json: ") + e.what());
  }
  if (manifest.value("dtype", "") != "float64") throw CheckpointError("manifest.json: dtype must be float64");
  const auto& entries = manifest.at("parameters");
  if (entries.size() != params.size())
    throw CheckpointError("checkpoint holds " + std::to_string(entries.size()) + " parameters, expected " +
                          std::to_string(params.size()));
  std::ifstream bin(dir / "params.bin", std::ios::binary);
  if (!bin) throw CheckpointError("missing " + (dir / "params.bin").string());
  std::vector<unsigned char> raw((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  const std::size_t total = manifest.at("total_values").get<std::size_t>();
  if (raw.size() != total * 8)
    throw CheckpointError("params.bin has " + std::to_string(raw.size()) + " bytes, expected " +
                          std::to_string(total * 8));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    const auto& e = entries[i];
    const auto name = e.at("name").get<std::string>();
    const auto rows = e.at("shape")[0].get<Index>();
    const auto cols = e.at("shape")[1].get<Index>();
    const auto offset = e.at("offset").get<std::size_t>();
    if (name != p.name) throw CheckpointError("parameter " + std::to_string(i) + ": name " + name + " != " + p.name);
    if (rows != p.value.rows() || cols != p.value.cols())
      throw CheckpointError("parameter " + name + ": shape mismatch");
    if ((offset + p.size()) * 8 > raw.size()) throw CheckpointError("parameter " + name + ": offset out of range");
    for (Index k = 0; k < p.value.size(); ++k) p.value.data()[k] = get_le(raw.data() + (offset + k) * 8);
  }
}

}  // namespace rgrl::autonet
