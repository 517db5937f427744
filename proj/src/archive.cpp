// SPDX-License-Identifier: Apache-2.0
#include "aple/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "aple/error.hpp"

namespace aple {
namespace {

constexpr char kMagic[4] = {'A', 'P', 'L', 'A'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kDtypeF32 = 0;

void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw IoError("archive truncated at byte " + std::to_string(pos_));
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_archive(std::span<const NamedTensor> entries) {
  std::set<std::string_view> names;
  std::string out(kMagic, sizeof kMagic);
  put_le(out, kVersion, 4);
  put_le(out, entries.size(), 4);
  for (const NamedTensor& e : entries) {
    if (e.name.empty()) throw UsageError("archive entry with empty name");
    if (!names.insert(e.name).second) throw UsageError("duplicate archive entry '" + e.name + "'");
    const Shape& shape = e.tensor.shape();
    if (shape.size() > 255) throw UsageError("archive entry rank too large: " + e.name);
    put_le(out, e.name.size(), 4);
    out += e.name;
    put_le(out, kDtypeF32, 1);
    put_le(out, shape.size(), 1);
    for (std::size_t d : shape) put_le(out, d, 8);
  }
  for (const NamedTensor& e : entries) {
    for (float v : e.tensor.data()) put_le(out, std::bit_cast<std::uint32_t>(v), 4);
  }
  return out;
}

std::vector<NamedTensor> decode_archive(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(4) != std::string_view(kMagic, 4)) throw IoError("not a tensor archive (bad magic)");
  const auto version = r.le(4);
  if (version != kVersion) throw IoError("unsupported archive version " + std::to_string(version));
  const auto count = r.le(4);

  std::vector<std::pair<std::string, Shape>> headers;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = r.le(4);
    std::string name(r.take(len));
    const auto dtype = r.le(1);
    if (dtype != kDtypeF32) {
      throw IoError("entry '" + name + "': unsupported dtype " + std::to_string(dtype));
    }
    const auto rank = r.le(1);
    if (rank == 0) throw IoError("entry '" + name + "': rank 0");
    Shape shape(rank);
    for (auto& d : shape) d = r.le(8);
    headers.emplace_back(std::move(name), std::move(shape));
  }

  std::vector<NamedTensor> out;
  out.reserve(headers.size());
  for (auto& [name, shape] : headers) {
    std::vector<float> data(shape_numel(shape));
    for (float& v : data) v = std::bit_cast<float>(static_cast<std::uint32_t>(r.le(4)));
    try {
      out.push_back({name, Tensor(shape, std::move(data))});
    } catch (const DimensionError& e) {
      throw IoError("entry '" + name + "': " + e.what());
    }
  }
  if (!r.done()) throw IoError("trailing bytes after archive payloads");
  return out;
}

void save_archive(const std::filesystem::path& path, std::span<const NamedTensor> entries) {
  const std::string bytes = encode_archive(entries);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

std::vector<NamedTensor> load_archive(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_archive(ss.str());
}

const Tensor& find_tensor(std::span<const NamedTensor> entries, std::string_view name) {
  for (const NamedTensor& e : entries) {
    if (e.name == name) return e.tensor;
  }
  throw IoError("archive has no entry '" + std::string(name) + "'");
}

}  // namespace aple
