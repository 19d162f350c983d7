#include "smf/util/binary_io.hpp"

#include <fstream>
#include <iterator>

namespace smf {

void ByteReader::fail(const std::string& what) const {
  throw FormatError(context_ + ": " + what + " (at byte " + std::to_string(pos_) + ")");
}

void ByteReader::need(std::size_t n) const {
  if (data_.size() - pos_ < n) fail("unexpected end of data, need " + std::to_string(n) + " more bytes");
}

std::uint64_t ByteReader::get(int n) {
  need(static_cast<std::size_t>(n));
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
  pos_ += static_cast<std::size_t>(n);
  return v;
}

void ByteReader::expect_magic(std::string_view m) {
  need(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (data_[pos_ + i] != static_cast<std::uint8_t>(m[i])) fail("bad magic, expected \"" + std::string(m) + "\"");
  }
  pos_ += m.size();
}

std::string ByteReader::str() {
  const auto n = u32();
  need(n);
  std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
  pos_ += n;
  return s;
}

std::vector<std::uint8_t> ByteReader::bytes(std::size_t n) {
  need(n);
  std::vector<std::uint8_t> out(data_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                data_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
  pos_ += n;
  return out;
}

std::vector<float> ByteReader::f32_array(std::size_t n) {
  need(n * 4);
  std::vector<float> out(n);
  for (auto& x : out) x = f32();
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path.string() + ": cannot open for reading");
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw std::runtime_error(path.string() + ": read error");
  return data;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error(path.string() + ": write error");
}

}  // namespace smf
