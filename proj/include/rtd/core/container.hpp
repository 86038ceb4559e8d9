#pragma once

// Versioned, checksummed binary container: string metadata plus named
// float64 arrays with shapes. Little-endian, row-major.
//
//   "RTDCKPT\0" | u32 version | u32 n_meta | {str key, str value}*
//   | u32 n_arrays | {str name, u32 rank, u64 dims[rank], f64 data[]}* | u32 crc32
//
// str = u32 length + bytes. The CRC covers every byte before it.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rtd/core/tensor.hpp"

namespace rtd {

inline constexpr std::uint32_t kContainerVersion = 1;

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

struct Container {
  std::map<std::string, std::string> meta;
  std::vector<NamedArray> arrays;

  const NamedArray* find(const std::string& name) const;
  const std::string& meta_at(const std::string& key) const;
};

std::string encode_container(const Container& c);
Container decode_container(const std::string& bytes);

void write_container(const std::string& path, const Container& c);
Container read_container(const std::string& path);

std::uint32_t crc32_of(const std::string& bytes);

}  // namespace rtd
