#include "nn/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace canav::nn {

namespace {

constexpr char kMagic[8] = {'C', 'A', 'N', 'A', 'V', 'C', 'K', '1'};

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) fail(ErrorKind::io, "checkpoint: truncated file");
  return v;
}

void write_reals(std::ostream& os, const real* data, size_t n) {
  os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(real)));
}

void read_reals(std::istream& is, real* data, size_t n) {
  is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(real)));
  if (!is) fail(ErrorKind::io, "checkpoint: truncated parameter data");
}

std::ifstream open_and_check(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::io, "checkpoint: cannot open '" + path + "'");
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    fail(ErrorKind::io, "checkpoint: '" + path + "' is not a checkpoint file");
  uint32_t real_bytes = read_pod<uint32_t>(is);
  if (real_bytes != sizeof(real))
    fail(ErrorKind::io,
         "checkpoint: '" + path + "' stores " + std::to_string(real_bytes * 8) +
             "-bit reals, this build uses " + std::to_string(sizeof(real) * 8) +
             "-bit");
  read_pod<uint32_t>(is);  // reserved
  return is;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const AdamState* adam, const std::string& metadata_json) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::io, "checkpoint: cannot write '" + path + "'");
  os.write(kMagic, 8);
  write_pod<uint32_t>(os, static_cast<uint32_t>(sizeof(real)));
  write_pod<uint32_t>(os, 0u);

  const auto& items = params.items();
  write_pod<uint64_t>(os, static_cast<uint64_t>(items.size()));
  for (const auto& [name, t] : items) {
    write_pod<uint32_t>(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<uint32_t>(os, static_cast<uint32_t>(t.ndim()));
    for (int i = 0; i < t.ndim(); ++i) write_pod<int32_t>(os, t.dim(i));
    write_reals(os, t.values().data(), t.values().size());
  }

  write_pod<uint8_t>(os, adam ? 1 : 0);
  if (adam) {
    if (!adam->m.empty() && adam->m.size() != items.size())
      fail(ErrorKind::invalid_argument,
           "checkpoint: optimizer state does not match parameter list");
    write_pod<int64_t>(os, adam->step);
    write_pod<double>(os, static_cast<double>(adam->beta1));
    write_pod<double>(os, static_cast<double>(adam->beta2));
    write_pod<double>(os, static_cast<double>(adam->eps));
    write_pod<uint8_t>(os, adam->m.empty() ? 0 : 1);
    if (!adam->m.empty()) {
      for (size_t i = 0; i < items.size(); ++i) {
        write_reals(os, adam->m[i].data(), adam->m[i].size());
        write_reals(os, adam->v[i].data(), adam->v[i].size());
      }
    }
  }

  write_pod<uint64_t>(os, static_cast<uint64_t>(metadata_json.size()));
  os.write(metadata_json.data(), static_cast<std::streamsize>(metadata_json.size()));
  if (!os) fail(ErrorKind::io, "checkpoint: write failed for '" + path + "'");
}

std::string load_checkpoint(const std::string& path, const ParamStore& params,
                            AdamState* adam) {
  std::ifstream is = open_and_check(path);
  const auto& items = params.items();
  uint64_t n = read_pod<uint64_t>(is);
  if (n != items.size())
    fail(ErrorKind::io, "checkpoint: '" + path + "' holds " + std::to_string(n) +
                            " params, model has " + std::to_string(items.size()));
  for (const auto& [name, t] : items) {
    uint32_t len = read_pod<uint32_t>(is);
    std::string stored(len, '\0');
    is.read(stored.data(), len);
    if (stored != name)
      fail(ErrorKind::io, "checkpoint: expected param '" + name + "', found '" +
                              stored + "'");
    uint32_t ndim = read_pod<uint32_t>(is);
    std::vector<int> shape(ndim);
    for (uint32_t i = 0; i < ndim; ++i) shape[i] = read_pod<int32_t>(is);
    if (shape != t.shape())
      fail(ErrorKind::io, "checkpoint: shape mismatch for param '" + name + "'");
    read_reals(is, t.node()->value.data(), t.node()->value.size());
  }

  uint8_t has_adam = read_pod<uint8_t>(is);
  if (has_adam) {
    int64_t step = read_pod<int64_t>(is);
    double b1 = read_pod<double>(is);
    double b2 = read_pod<double>(is);
    double eps = read_pod<double>(is);
    uint8_t has_moments = read_pod<uint8_t>(is);
    std::vector<std::vector<real>> m, v;
    if (has_moments) {
      m.resize(items.size());
      v.resize(items.size());
      for (size_t i = 0; i < items.size(); ++i) {
        size_t sz = items[i].second.values().size();
        m[i].resize(sz);
        v[i].resize(sz);
        read_reals(is, m[i].data(), sz);
        read_reals(is, v[i].data(), sz);
      }
    }
    if (adam) {
      adam->step = step;
      adam->beta1 = static_cast<real>(b1);
      adam->beta2 = static_cast<real>(b2);
      adam->eps = static_cast<real>(eps);
      adam->m = std::move(m);
      adam->v = std::move(v);
    }
  } else if (adam) {
    *adam = AdamState{};
  }

  uint64_t meta_len = read_pod<uint64_t>(is);
  std::string meta(meta_len, '\0');
  is.read(meta.data(), static_cast<std::streamsize>(meta_len));
  if (!is) fail(ErrorKind::io, "checkpoint: truncated metadata");
  return meta;
}

std::string read_checkpoint_metadata(const std::string& path) {
  std::ifstream is = open_and_check(path);
  uint64_t n = read_pod<uint64_t>(is);
  int64_t total_scalars = 0;
  for (uint64_t p = 0; p < n; ++p) {
    uint32_t len = read_pod<uint32_t>(is);
    is.seekg(len, std::ios::cur);
    uint32_t ndim = read_pod<uint32_t>(is);
    int64_t sz = 1;
    for (uint32_t i = 0; i < ndim; ++i) sz *= read_pod<int32_t>(is);
    total_scalars += sz;
    is.seekg(static_cast<std::streamoff>(sz * static_cast<int64_t>(sizeof(real))),
             std::ios::cur);
  }
  uint8_t has_adam = read_pod<uint8_t>(is);
  if (has_adam) {
    read_pod<int64_t>(is);
    read_pod<double>(is);
    read_pod<double>(is);
    read_pod<double>(is);
    uint8_t has_moments = read_pod<uint8_t>(is);
    if (has_moments)
      is.seekg(static_cast<std::streamoff>(2 * total_scalars *
                                           static_cast<int64_t>(sizeof(real))),
               std::ios::cur);
  }
  uint64_t meta_len = read_pod<uint64_t>(is);
  std::string meta(meta_len, '\0');
  is.read(meta.data(), static_cast<std::streamoff>(meta_len));
  if (!is) fail(ErrorKind::io, "checkpoint: truncated metadata");
  return meta;
}

}  // namespace canav::nn
