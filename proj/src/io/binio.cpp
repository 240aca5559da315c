#include "mbr/io/blobs.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

namespace mbr::io {

namespace {

constexpr char kBlobMagic[8] = {'M', 'B', 'R', 'B', 'L', 'O', 'B', '1'};
constexpr char kEmbMagic[8] = {'M', 'B', 'R', 'E', 'M', 'B', '1', '\0'};

void write_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

}  // namespace

void save_blobs(const std::string& path, const NamedBlobs& blobs) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) fail("cannot open '", tmp, "' for writing");
    os.write(kBlobMagic, sizeof(kBlobMagic));
    const std::string meta = blobs.meta.dump();
    write_u64(os, meta.size());
    os.write(meta.data(), std::streamsize(meta.size()));
    write_u64(os, blobs.tensors.size());
    for (const auto& [name, data] : blobs.tensors) {
      write_u64(os, name.size());
      os.write(name.data(), std::streamsize(name.size()));
      write_u64(os, data.size());
      os.write(reinterpret_cast<const char*>(data.data()),
               std::streamsize(data.size() * sizeof(float)));
    }
    if (!os) fail("short write to '", tmp, "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    fail("cannot move '", tmp, "' into place at '", path, "'");
}

NamedBlobs load_blobs(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("cannot open '", path, "'");
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kBlobMagic, sizeof(magic)) != 0)
    fail("'", path, "' is not a weight container");
  NamedBlobs out;
  const std::uint64_t meta_len = read_u64(is);
  std::string meta(meta_len, '\0');
  is.read(meta.data(), std::streamsize(meta_len));
  out.meta = nlohmann::json::parse(meta);
  const std::uint64_t count = read_u64(is);
  for (std::uint64_t t = 0; t < count; ++t) {
    const std::uint64_t name_len = read_u64(is);
    std::string name(name_len, '\0');
    is.read(name.data(), std::streamsize(name_len));
    const std::uint64_t numel = read_u64(is);
    std::vector<float> data(numel);
    is.read(reinterpret_cast<char*>(data.data()), std::streamsize(numel * sizeof(float)));
    if (!is) fail("truncated weight container '", path, "'");
    out.tensors.emplace_back(std::move(name), std::move(data));
  }
  return out;
}

void save_embedding_matrix(const std::string& path, const float* data, std::uint64_t rows,
                           std::uint64_t dim) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) fail("cannot open '", tmp, "' for writing");
    os.write(kEmbMagic, sizeof(kEmbMagic));
    write_u64(os, rows);
    write_u64(os, dim);
    write_u32(os, 0);  // dtype 0 = float32
    os.write(reinterpret_cast<const char*>(data), std::streamsize(rows * dim * sizeof(float)));
    if (!os) fail("short write to '", tmp, "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    fail("cannot move '", tmp, "' into place at '", path, "'");
}

void load_embedding_matrix(const std::string& path, std::vector<float>& data,
                           std::uint64_t& rows, std::uint64_t& dim) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("cannot open '", path, "'");
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kEmbMagic, sizeof(magic)) != 0)
    fail("'", path, "' is not an embedding container");
  rows = read_u64(is);
  dim = read_u64(is);
  const std::uint32_t dtype = read_u32(is);
  if (dtype != 0) fail("unsupported embedding dtype ", dtype);
  data.resize(rows * dim);
  is.read(reinterpret_cast<char*>(data.data()), std::streamsize(data.size() * sizeof(float)));
  if (!is) fail("truncated embedding container '", path, "'");
}

}  // namespace mbr::io
