#include "bseg/nn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

namespace bseg::nn {

namespace {

constexpr char kMagic[8] = {'B', 'S', 'E', 'G', 'C', 'K', 'B', '1'};

}  // namespace

void save_checkpoint(const std::string& path, VNet& net, const nlohmann::ordered_json& extra) {
  auto params = net.params();
  auto bufs = net.buffers();

  nlohmann::ordered_json table = nlohmann::ordered_json::array();
  int64_t offset = 0;
  auto add = [&](const std::string& name, const char* kind, const std::vector<int64_t>& shape,
                 size_t count) {
    table.push_back({{"name", name}, {"kind", kind}, {"shape", shape}, {"offset", offset}});
    offset += int64_t(count);
  };
  for (const auto& p : params) add(p.name, "param", p.shape, p.value->size());
  for (const auto& b : bufs) add(b.name, "buffer", b.shape, b.value->size());

  nlohmann::ordered_json header{{"format_version", 1},
                                {"model", net.config().to_json()},
                                {"tensors", std::move(table)},
                                {"extra", extra}};
  const std::string hs = header.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot open '" + path + "' for writing");
  f.write(kMagic, 8);
  uint64_t hlen = hs.size();
  f.write(reinterpret_cast<const char*>(&hlen), 8);
  f.write(hs.data(), std::streamsize(hs.size()));
  for (const auto& p : params)
    f.write(reinterpret_cast<const char*>(p.value->data()),
            std::streamsize(p.value->size() * sizeof(float)));
  for (const auto& b : bufs)
    f.write(reinterpret_cast<const char*>(b.value->data()),
            std::streamsize(b.value->size() * sizeof(float)));
  if (!f) throw IoError("checkpoint: write to '" + path + "' failed");
}

std::unique_ptr<VNet> load_checkpoint(const std::string& path, nlohmann::json* extra_out) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot open '" + path + "'");
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw IoError("checkpoint: '" + path + "' has no valid header");
  uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), 8);
  if (!f || hlen == 0 || hlen > (64u << 20))
    throw IoError("checkpoint: '" + path + "' header length is corrupt");
  std::string hs(hlen, '\0');
  f.read(hs.data(), std::streamsize(hlen));
  if (!f) throw IoError("checkpoint: '" + path + "' header is truncated");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint: '" + path + "' header is not valid JSON: " + e.what());
  }

  VNetConfig cfg;
  try {
    cfg = VNetConfig::from_json(header.at("model"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint: '" + path + "' model block is malformed: " + e.what());
  }
  Rng rng(0);
  auto net = std::make_unique<VNet>(cfg, rng);

  std::map<std::string, std::vector<float>*> slots;
  for (auto& p : net->params()) slots[p.name] = p.value;
  for (auto& b : net->buffers()) slots[b.name] = b.value;

  if (!header.contains("tensors") || header["tensors"].size() != slots.size())
    throw IoError("checkpoint: '" + path + "' tensor table does not match the model");

  for (const auto& entry : header["tensors"]) {
    const std::string name = entry.at("name").get<std::string>();
    auto it = slots.find(name);
    if (it == slots.end()) throw IoError("checkpoint: unknown tensor '" + name + "'");
    int64_t expect = 1;
    for (int64_t s : entry.at("shape").get<std::vector<int64_t>>()) expect *= s;
    if (expect != int64_t(it->second->size()))
      throw IoError("checkpoint: tensor '" + name + "' has shape mismatch");
    f.read(reinterpret_cast<char*>(it->second->data()),
           std::streamsize(it->second->size() * sizeof(float)));
    if (!f) throw IoError("checkpoint: '" + path + "' payload is truncated at '" + name + "'");
  }
  if (extra_out && header.contains("extra")) *extra_out = header["extra"];
  return net;
}

}  // namespace bseg::nn
