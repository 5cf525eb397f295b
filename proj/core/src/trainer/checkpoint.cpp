#include "effssl/trainer/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace effssl::train {

uint32_t crc32(const unsigned char* data, size_t len) {
  static uint32_t table[256];
  static bool ready = false;
  if (!ready) {
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      table[i] = c;
    }
    ready = true;
  }
  uint32_t c = 0xFFFFFFFFu;
  for (size_t i = 0; i < len; ++i) c = table[(c ^ data[i]) & 0xFFu] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

namespace {

void put_u16(std::vector<unsigned char>& out, uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
}
void put_u32(std::vector<unsigned char>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::vector<unsigned char>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

struct Cursor {
  const unsigned char* p;
  size_t remaining;
  void need(size_t n) const {
    if (n > remaining) throw std::runtime_error("checkpoint: truncated file");
  }
  uint16_t u16() {
    need(2);
    uint16_t v = static_cast<uint16_t>(p[0] | (p[1] << 8));
    p += 2;
    remaining -= 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
    p += 4;
    remaining -= 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
    p += 8;
    remaining -= 8;
    return v;
  }
  const unsigned char* bytes(size_t n) {
    need(n);
    const unsigned char* q = p;
    p += n;
    remaining -= n;
    return q;
  }
};

size_t element_size(BlobType t) {
  switch (t) {
    case BlobType::F32: return 4;
    case BlobType::F64: return 8;
    case BlobType::I64: return 8;
    case BlobType::Bytes: return 1;
  }
  throw std::runtime_error("checkpoint: unknown dtype");
}

}  // namespace

void write_blob_file(const std::string& path, const BlobMap& blobs) {
  std::vector<unsigned char> payload;
  put_u32(payload, static_cast<uint32_t>(blobs.size()));
  for (const auto& [name, blob] : blobs) {
    put_u32(payload, static_cast<uint32_t>(name.size()));
    payload.insert(payload.end(), name.begin(), name.end());
    payload.push_back(static_cast<unsigned char>(blob.dtype));
    put_u32(payload, static_cast<uint32_t>(blob.shape.size()));
    for (int64_t d : blob.shape) put_u64(payload, static_cast<uint64_t>(d));
    payload.insert(payload.end(), blob.bytes.begin(), blob.bytes.end());
  }
  const uint32_t checksum = crc32(payload.data(), payload.size());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out.write("EFSS", 4);
  std::vector<unsigned char> ver;
  put_u16(ver, kCheckpointVersion);
  out.write(reinterpret_cast<const char*>(ver.data()), 2);
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
  std::vector<unsigned char> ck;
  put_u32(ck, checksum);
  out.write(reinterpret_cast<const char*>(ck.data()), 4);
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

BlobMap read_blob_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  std::vector<unsigned char> raw((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (raw.size() < 10) throw std::runtime_error("checkpoint: truncated file");
  if (std::memcmp(raw.data(), "EFSS", 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const uint16_t version = static_cast<uint16_t>(raw[4] | (raw[5] << 8));
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));

  const size_t payload_len = raw.size() - 6 - 4;
  const unsigned char* payload = raw.data() + 6;
  uint32_t stored = 0;
  for (int i = 0; i < 4; ++i)
    stored |= static_cast<uint32_t>(raw[raw.size() - 4 + static_cast<size_t>(i)]) << (8 * i);
  if (crc32(payload, payload_len) != stored)
    throw std::runtime_error("checkpoint: checksum mismatch in " + path);

  Cursor cur{payload, payload_len};
  const uint32_t count = cur.u32();
  BlobMap blobs;
  for (uint32_t e = 0; e < count; ++e) {
    const uint32_t name_len = cur.u32();
    const unsigned char* name_p = cur.bytes(name_len);
    std::string name(reinterpret_cast<const char*>(name_p), name_len);
    Blob blob;
    cur.need(1);
    blob.dtype = static_cast<BlobType>(*cur.bytes(1));
    const uint32_t rank = cur.u32();
    int64_t numel = 1;
    for (uint32_t i = 0; i < rank; ++i) {
      blob.shape.push_back(static_cast<int64_t>(cur.u64()));
      numel *= blob.shape.back();
    }
    const size_t nbytes = static_cast<size_t>(numel) * element_size(blob.dtype);
    const unsigned char* data = cur.bytes(nbytes);
    blob.bytes.assign(data, data + nbytes);
    blobs.emplace(std::move(name), std::move(blob));
  }
  return blobs;
}

Blob blob_from_tensor(const Tensor& t) {
  Blob b;
  b.dtype = BlobType::F32;
  b.shape = t.shape();
  b.bytes.resize(sizeof(float) * static_cast<size_t>(t.numel()));
  std::memcpy(b.bytes.data(), t.data(), b.bytes.size());
  return b;
}

Tensor tensor_from_blob(const Blob& b) {
  if (b.dtype != BlobType::F32) throw std::runtime_error("checkpoint: expected f32 blob");
  Tensor t(b.shape);
  if (b.bytes.size() != sizeof(float) * static_cast<size_t>(t.numel()))
    throw std::runtime_error("checkpoint: blob size mismatch");
  std::memcpy(t.data(), b.bytes.data(), b.bytes.size());
  return t;
}

Blob blob_from_i64(int64_t v) {
  Blob b;
  b.dtype = BlobType::I64;
  b.shape = {1};
  b.bytes.resize(8);
  std::memcpy(b.bytes.data(), &v, 8);
  return b;
}

int64_t i64_from_blob(const Blob& b) {
  if (b.dtype != BlobType::I64 || b.bytes.size() != 8)
    throw std::runtime_error("checkpoint: expected i64 blob");
  int64_t v;
  std::memcpy(&v, b.bytes.data(), 8);
  return v;
}

Blob blob_from_string(const std::string& s) {
  Blob b;
  b.dtype = BlobType::Bytes;
  b.shape = {static_cast<int64_t>(s.size())};
  b.bytes.assign(s.begin(), s.end());
  return b;
}

std::string string_from_blob(const Blob& b) {
  if (b.dtype != BlobType::Bytes) throw std::runtime_error("checkpoint: expected bytes blob");
  return std::string(b.bytes.begin(), b.bytes.end());
}

Blob blob_from_doubles(const std::vector<double>& v) {
  Blob b;
  b.dtype = BlobType::F64;
  b.shape = {static_cast<int64_t>(v.size())};
  b.bytes.resize(8 * v.size());
  std::memcpy(b.bytes.data(), v.data(), b.bytes.size());
  return b;
}

std::vector<double> doubles_from_blob(const Blob& b) {
  if (b.dtype != BlobType::F64) throw std::runtime_error("checkpoint: expected f64 blob");
  std::vector<double> v(b.bytes.size() / 8);
  std::memcpy(v.data(), b.bytes.data(), b.bytes.size());
  return v;
}

}  // namespace effssl::train
