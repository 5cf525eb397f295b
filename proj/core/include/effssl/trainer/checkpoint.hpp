#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "effssl/tensor.hpp"

namespace effssl::train {

/// Checkpoint container: magic "EFSS", u16le version, u32le entry count,
/// then entries (u32le name length, name bytes, u8 dtype, u32le rank,
/// u64le dims, payload little-endian), terminated by a u32le CRC-32 over
/// everything after the version field.
enum class BlobType : uint8_t { F32 = 0, F64 = 1, I64 = 2, Bytes = 3 };

struct Blob {
  BlobType dtype = BlobType::Bytes;
  std::vector<int64_t> shape;
  std::vector<unsigned char> bytes;
};

using BlobMap = std::map<std::string, Blob>;

constexpr uint16_t kCheckpointVersion = 1;

void write_blob_file(const std::string& path, const BlobMap& blobs);
/// Throws std::runtime_error on bad magic, version mismatch, truncation, or
/// checksum mismatch.
BlobMap read_blob_file(const std::string& path);

Blob blob_from_tensor(const Tensor& t);
Tensor tensor_from_blob(const Blob& b);
Blob blob_from_i64(int64_t v);
int64_t i64_from_blob(const Blob& b);
Blob blob_from_string(const std::string& s);
std::string string_from_blob(const Blob& b);
Blob blob_from_doubles(const std::vector<double>& v);
std::vector<double> doubles_from_blob(const Blob& b);

uint32_t crc32(const unsigned char* data, size_t len);

}  // namespace effssl::train
