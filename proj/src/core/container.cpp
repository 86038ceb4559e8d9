#include "rtd/core/container.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rtd/core/errors.hpp"

namespace rtd {

namespace {

constexpr char kMagic[8] = {'R', 'T', 'D', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void put(std::string& out, T v) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_str(std::string& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

class Reader {
 public:
  explicit Reader(const std::string& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string get_str() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void get_doubles(double* dst, std::size_t n) {
    need(n * sizeof(double));
    std::memcpy(dst, bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }

  std::size_t pos() const { return pos_; }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }

 private:
  void need(std::size_t n) const {
    if (n > end_ - pos_) throw CheckpointError("container truncated");
  }
  const std::string& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint32_t crc32_of(const std::string& bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

const NamedArray* Container::find(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

const std::string& Container::meta_at(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) throw CheckpointError("container missing metadata key '" + key + "'");
  return it->second;
}

std::string encode_container(const Container& c) {
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kContainerVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.meta.size()));
  for (const auto& [k, v] : c.meta) {
    put_str(out, k);
    put_str(out, v);
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.arrays.size()));
  for (const auto& a : c.arrays) {
    RTD_REQUIRE(shape_size(a.shape) == a.data.size(), "container array '" + a.name + "' shape/data mismatch");
    put_str(out, a.name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.shape.size()));
    for (std::size_t d : a.shape) put<std::uint64_t>(out, d);
    out.append(reinterpret_cast<const char*>(a.data.data()), a.data.size() * sizeof(double));
  }
  put<std::uint32_t>(out, crc32_of(out));
  return out;
}

Container decode_container(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) + 8 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("not a checkpoint container (bad magic)");
  }
  const std::size_t body = bytes.size() - sizeof(std::uint32_t);
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body, sizeof(stored));
  if (stored != crc32_of(bytes.substr(0, body))) throw CheckpointError("checksum mismatch (corrupt or tampered file)");

  Reader r(bytes, body);
  r.skip(sizeof(kMagic));
  const auto version = r.get<std::uint32_t>();
  if (version != kContainerVersion) {
    throw CheckpointError("unsupported container version " + std::to_string(version));
  }
  Container c;
  const auto n_meta = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.get_str();
    c.meta[k] = r.get_str();
  }
  const auto n_arrays = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_arrays; ++i) {
    NamedArray a;
    a.name = r.get_str();
    const auto rank = r.get<std::uint32_t>();
    for (std::uint32_t d = 0; d < rank; ++d) a.shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
    a.data.resize(shape_size(a.shape));
    r.get_doubles(a.data.data(), a.data.size());
    c.arrays.push_back(std::move(a));
  }
  if (r.pos() != body) throw CheckpointError("trailing bytes in container");
  return c;
}

void write_container(const std::string& path, const Container& c) {
  const std::string bytes = encode_container(c);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("cannot open '" + tmp + "' for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw CheckpointError("write failed for '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

Container read_container(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_container(ss.str());
}

}  // namespace rtd
