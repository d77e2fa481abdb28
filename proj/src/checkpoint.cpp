#include "hypervae/checkpoint.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace hypervae {

namespace {

constexpr char kMagic[8] = {'H', 'V', 'A', 'E', 'W', 'T', 'S', '\n'};
constexpr std::uint8_t kVersion = 1;

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;
  explicit Reader(const std::string& b) : buf(b) {}
  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw std::runtime_error("checkpoint truncated");
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint8_t>(buf[pos]) | (static_cast<std::uint16_t>(static_cast<std::uint8_t>(buf[pos + 1])) << 8);
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf[pos++]);
  }
  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(buf[pos + i])) << (8 * i);
    pos += 8;
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

void save_checkpoint(const ParamStore& params, const std::string& path) {
  std::string out;
  out.append(kMagic, 8);
  out.push_back(static_cast<char>(kVersion));
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params.items()) {
    if (name.size() > 0xffff) throw std::invalid_argument("parameter name too long: " + name);
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.append(name);
    const auto& s = t.shape();
    out.push_back(static_cast<char>(s.size()));
    for (int e : s) put_u32(out, static_cast<std::uint32_t>(e));
    for (double d : t.data()) put_f64(out, d);
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + tmp);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

void load_checkpoint(ParamStore& params, const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r(buf);
  const std::string magic = r.bytes(8);
  if (std::memcmp(magic.data(), kMagic, 8) != 0) throw std::runtime_error("bad checkpoint magic in " + path);
  const std::uint8_t version = r.u8();
  if (version != kVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) + " in " + path);
  const std::uint32_t count = r.u32();
  if (count != params.size())
    throw std::runtime_error("checkpoint has " + std::to_string(count) + " records, expected " +
                             std::to_string(params.size()));
  for (auto& [name, t] : params.items()) {
    const std::string rec_name = r.bytes(r.u16());
    if (rec_name != name) throw std::runtime_error("checkpoint record '" + rec_name + "' does not match '" + name + "'");
    const std::uint8_t rank = r.u8();
    Shape s(rank);
    for (auto& e : s) e = static_cast<int>(r.u32());
    if (s != t.shape())
      throw std::runtime_error("checkpoint shape mismatch for '" + name + "': file " + shape_str(s) + " vs " +
                               shape_str(t.shape()));
    for (double& d : t.mutable_data()) d = r.f64();
  }
  if (r.pos != buf.size()) throw std::runtime_error("trailing bytes in checkpoint " + path);
}

}  // namespace hypervae
