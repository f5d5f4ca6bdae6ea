// SPDX-License-Identifier: Apache-2.0

#include "equikit/serialize.hpp"

#include <cstring>
#include <fstream>
#include <json.hpp>

namespace equikit {

namespace {

constexpr char kMagic[4] = {'E', 'Q', 'T', 'N'};

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("tensor container: truncated header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32(std::ostream& out, float v) {
  static_assert(sizeof(float) == 4);
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(out, bits);
}

float read_f32(std::istream& in) {
  const std::uint32_t bits = read_u32(in);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

std::string strip_extension(const std::string& path) {
  if (path.size() > 5 && path.substr(path.size() - 5) == ".eqtn") return path.substr(0, path.size() - 5);
  if (path.size() > 5 && path.substr(path.size() - 5) == ".json") return path.substr(0, path.size() - 5);
  return path;
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
  out.write(kMagic, 4);
  write_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (int d : t.shape()) write_u32(out, static_cast<std::uint32_t>(d));
  const double* p = t.data();
  for (std::int64_t i = 0; i < t.numel(); ++i) write_f32(out, static_cast<float>(p[i]));
}

Tensor read_tensor(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("tensor container: bad magic");
  const std::uint32_t rank = read_u32(in);
  if (rank == 0 || rank > 8) throw std::runtime_error("tensor container: implausible rank");
  std::vector<int> shape(rank);
  for (auto& d : shape) d = static_cast<int>(read_u32(in));
  Tensor t(shape);
  double* p = t.data();
  for (std::int64_t i = 0; i < t.numel(); ++i) p[i] = static_cast<double>(read_f32(in));
  if (!in) throw std::runtime_error("tensor container: truncated payload");
  return t;
}

void save_tensors(const std::string& path, const std::vector<Tensor>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (const auto& t : tensors) write_tensor(out, t);
}

std::vector<Tensor> load_tensors(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::vector<Tensor> out;
  while (in.peek() != std::char_traits<char>::eof()) out.push_back(read_tensor(in));
  return out;
}

void save_checkpoint(const std::string& stem, const std::vector<ParamRecord>& records,
                     const std::vector<Tensor>& tensors, const std::string& config_json) {
  if (records.size() != tensors.size())
    throw std::invalid_argument("checkpoint: record/tensor count mismatch");
  save_tensors(stem + ".eqtn", tensors);

  nlohmann::json meta;
  meta["format"] = "equikit-checkpoint";
  meta["params"] = nlohmann::json::array();
  for (std::size_t i = 0; i < records.size(); ++i) {
    nlohmann::json p;
    p["index"] = i;
    p["name"] = records[i].name;
    p["layer"] = records[i].layer;
    p["role"] = records[i].role;
    p["group_order"] = records[i].group_order;
    p["shape"] = tensors[i].shape();
    meta["params"].push_back(p);
  }
  if (!config_json.empty()) meta["config"] = nlohmann::json::parse(config_json);
  std::ofstream out(stem + ".json");
  if (!out) throw std::runtime_error("cannot open for writing: " + stem + ".json");
  out << meta.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::string stem = strip_extension(path);
  Checkpoint ck;
  ck.tensors = load_tensors(stem + ".eqtn");

  std::ifstream in(stem + ".json");
  if (!in) throw std::runtime_error("cannot open: " + stem + ".json");
  nlohmann::json meta = nlohmann::json::parse(in);
  for (const auto& p : meta.at("params")) {
    ParamRecord r;
    r.name = p.at("name").get<std::string>();
    r.layer = p.value("layer", "");
    r.role = p.value("role", "");
    r.group_order = p.value("group_order", 1);
    ck.records.push_back(std::move(r));
  }
  if (ck.records.size() != ck.tensors.size())
    throw std::runtime_error("checkpoint: sidecar does not match container");
  if (meta.contains("config")) ck.config_json = meta["config"].dump();
  return ck;
}

}  // namespace equikit
