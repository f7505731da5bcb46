#include "pmp/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "pmp/config.hpp"

namespace pmp {

namespace {

constexpr char kMagic[4] = {'P', 'M', 'P', 'K'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

uint32_t get_u32(std::istream& in, const std::string& what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error("checkpoint: truncated while reading " + what);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t get_u64(std::istream& in, const std::string& what) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8))
    throw std::runtime_error("checkpoint: truncated while reading " + what);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in, const std::string& what) {
  uint64_t bits = get_u64(in, what);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

std::string get_bytes(std::istream& in, uint64_t n, const std::string& what) {
  std::string s(n, '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n)))
    throw std::runtime_error("checkpoint: truncated while reading " + what);
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const PmpNet& net) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);

  out.write(kMagic, 4);
  put_u32(out, kVersion);

  std::string cfg_text = kv_to_text(net_config_to_kv(net.config()));
  put_u64(out, cfg_text.size());
  out.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));

  const auto& items = net.params().items();
  put_u64(out, items.size());
  for (const auto& [name, tensor] : items) {
    put_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    const Shape& shape = tensor.shape();
    put_u32(out, static_cast<uint32_t>(shape.size()));
    for (int64_t d : shape) put_u64(out, static_cast<uint64_t>(d));
    for (double v : tensor.values()) put_f64(out, v);
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
  out.close();

  std::ofstream man(path + ".manifest.txt");
  if (!man) throw std::runtime_error("checkpoint: cannot write " + path + ".manifest.txt");
  man << "tensors " << items.size() << "\n";
  for (const auto& [name, tensor] : items)
    man << name << " " << shape_str(tensor.shape()) << "\n";
  man << "config\n" << cfg_text;
  if (!man) throw std::runtime_error("checkpoint: write failed for " + path + ".manifest.txt");
}

PmpNet load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);

  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: " + path + " is not a checkpoint file");
  uint32_t version = get_u32(in, "version");
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));

  uint64_t cfg_len = get_u64(in, "config length");
  std::string cfg_text = get_bytes(in, cfg_len, "config");
  NetConfig cfg = net_config_from_kv(parse_kv_text(cfg_text));
  PmpNet net(cfg, /*init_seed=*/0);

  uint64_t count = get_u64(in, "tensor count");
  if (count != static_cast<uint64_t>(net.params().count()))
    throw std::runtime_error("checkpoint/architecture mismatch: file has " +
                             std::to_string(count) + " tensors, config expects " +
                             std::to_string(net.params().count()));
  for (uint64_t t = 0; t < count; ++t) {
    uint64_t name_len = get_u64(in, "tensor name length");
    std::string name = get_bytes(in, name_len, "tensor name");
    uint32_t rank = get_u32(in, "tensor rank of " + name);
    Shape shape(rank);
    for (uint32_t r = 0; r < rank; ++r)
      shape[r] = static_cast<int64_t>(get_u64(in, "tensor dims of " + name));

    if (!net.params().has(name))
      throw std::runtime_error("checkpoint/architecture mismatch: unknown tensor " + name);
    Tensor dst = net.params().at(name);
    if (dst.shape() != shape)
      throw std::runtime_error("checkpoint/architecture mismatch: " + name + " has shape " +
                               shape_str(shape) + ", expected " + shape_str(dst.shape()));
    auto& vals = dst.mutable_values();
    for (double& v : vals) v = get_f64(in, "tensor data of " + name);
  }
  return net;
}

}  // namespace pmp
