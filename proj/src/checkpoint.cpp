#include "ssda/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "ssda/error.hpp"

namespace ssda {

using nlohmann::json;

namespace {
constexpr char kMagic[] = "SSDACKP1";
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open '" + path + "' for writing");

  json header;
  header["config"] = json::parse(detector_config_to_json(ckpt.config));
  header["tensors"] = json::array();
  for (size_t i = 0; i < ckpt.params.size(); ++i) {
    header["tensors"].push_back(
        json{{"name", ckpt.params.names()[i]}, {"shape", ckpt.params.value(i).shape}});
  }
  const std::string head = header.dump();
  os << kMagic << "\n" << head << "\n";
  for (size_t i = 0; i < ckpt.params.size(); ++i) {
    const Tensor& t = ckpt.params.value(i);
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  }
  if (!os) throw DataError("write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open '" + path + "'");
  std::string magic, head;
  if (!std::getline(is, magic) || magic != kMagic) {
    throw DataError("'" + path + "' is not a checkpoint file");
  }
  if (!std::getline(is, head)) throw DataError("'" + path + "': missing header");

  json header;
  try {
    header = json::parse(head);
  } catch (const json::exception& e) {
    throw DataError("'" + path + "': " + e.what());
  }
  Checkpoint ckpt;
  ckpt.config = detector_config_from_json(header.at("config").dump());
  for (const json& tj : header.at("tensors")) {
    const std::string name = tj.at("name").get<std::string>();
    Tensor t(tj.at("shape").get<std::vector<int>>());
    is.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!is) throw DataError("'" + path + "': truncated tensor data for " + name);
    ckpt.params.add(name, std::move(t));
  }
  return ckpt;
}

}  // namespace ssda
