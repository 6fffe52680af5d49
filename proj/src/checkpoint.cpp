#include "deglink/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace deglink {

static_assert(std::endian::native == std::endian::little, "archive format assumes little-endian");

namespace {

constexpr char kMagic[4] = {'D', 'L', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string get_string(std::size_t n) {
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

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw std::runtime_error("checkpoint: truncated archive");
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const Matrix& TensorArchive::at(const std::string& name) const {
  for (const auto& [n, m] : tensors) {
    if (n == name) return m;
  }
  throw std::out_of_range("checkpoint: no tensor named '" + name + "'");
}

bool TensorArchive::contains(const std::string& name) const {
  for (const auto& entry : tensors) {
    if (entry.first == name) return true;
  }
  return false;
}

std::string encode_archive(const TensorArchive& archive) {
  std::string out(kMagic, 4);
  put(out, kVersion);
  put(out, static_cast<std::uint64_t>(archive.metadata.size()));
  out += archive.metadata;
  put(out, static_cast<std::uint64_t>(archive.tensors.size()));
  for (const auto& [name, m] : archive.tensors) {
    put(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put(out, static_cast<std::uint64_t>(m.rows()));
    put(out, static_cast<std::uint64_t>(m.cols()));
    out.append(reinterpret_cast<const char*>(m.data()),
               static_cast<std::size_t>(m.size()) * sizeof(double));
  }
  return out;
}

TensorArchive decode_archive(const std::string& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw std::runtime_error("checkpoint: bad magic");
  }
  Reader in(bytes);
  in.get_string(4);
  const auto version = in.get<std::uint32_t>();
  if (version != kVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  TensorArchive archive;
  archive.metadata = in.get_string(in.get<std::uint64_t>());
  const auto count = in.get<std::uint64_t>();
  for (std::uint64_t k = 0; k < count; ++k) {
    std::string name = in.get_string(in.get<std::uint32_t>());
    const auto rows = in.get<std::uint64_t>();
    const auto cols = in.get<std::uint64_t>();
    Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
    in.get_doubles(m.data(), rows * cols);
    archive.tensors.emplace_back(std::move(name), std::move(m));
  }
  if (!in.done()) throw std::runtime_error("checkpoint: trailing bytes after last tensor");
  return archive;
}

void write_archive(const std::string& path, const TensorArchive& archive) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
  const std::string bytes = encode_archive(archive);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("checkpoint: write to '" + path + "' failed");
}

TensorArchive read_archive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_archive(ss.str());
}

}  // namespace deglink
