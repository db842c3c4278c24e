#include "pino/io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace pino {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

std::uint32_t crc32(std::span<const std::uint8_t> bytes, std::uint32_t seed) {
  uLong c = seed;
  // zlib takes uInt lengths; feed in chunks for buffers over 4 GiB.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - off, 1u << 30);
    c = ::crc32(c, bytes.data() + off, static_cast<uInt>(n));
    off += n;
  }
  return static_cast<std::uint32_t>(c);
}

std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

namespace {
template <class T>
void put(std::vector<std::uint8_t>& buf, T v) {
  std::uint8_t b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  buf.insert(buf.end(), b, b + sizeof(T));
}
}  // namespace

void ByteWriter::u16(std::uint16_t v) { put(buf_, v); }
void ByteWriter::u32(std::uint32_t v) { put(buf_, v); }
void ByteWriter::u64(std::uint64_t v) { put(buf_, v); }
void ByteWriter::f32(float v) { put(buf_, v); }
void ByteWriter::f64(double v) { put(buf_, v); }
void ByteWriter::bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
void ByteWriter::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes(s);
}

void ByteReader::need(std::size_t n) {
  if (remaining() < n)
    throw DataError(what_ + ": truncated at byte " + std::to_string(pos_) + " (need " +
                    std::to_string(n) + ", have " + std::to_string(remaining()) + ")");
}

namespace {
template <class T>
T get(std::span<const std::uint8_t> d, std::size_t& pos) {
  T v;
  std::memcpy(&v, d.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}
}  // namespace

std::uint8_t ByteReader::u8() { need(1); return data_[pos_++]; }
std::uint16_t ByteReader::u16() { need(2); return get<std::uint16_t>(data_, pos_); }
std::uint32_t ByteReader::u32() { need(4); return get<std::uint32_t>(data_, pos_); }
std::uint64_t ByteReader::u64() { need(8); return get<std::uint64_t>(data_, pos_); }
float ByteReader::f32() { need(4); return get<float>(data_, pos_); }
double ByteReader::f64() { need(8); return get<double>(data_, pos_); }

std::string ByteReader::bytes(std::size_t n) {
  need(n);
  std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
  pos_ += n;
  return s;
}

std::string ByteReader::str() {
  const std::uint32_t n = u32();
  return bytes(n);
}

void ByteReader::expect(std::string_view magic) {
  const std::string got = bytes(magic.size());
  if (got != magic) throw DataError(what_ + ": bad magic, expected \"" + std::string(magic) + "\"");
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + path.string());
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::string read_text(const std::filesystem::path& path) {
  auto b = read_file(path);
  return {b.begin(), b.end()};
}

std::uint32_t file_crc(const std::filesystem::path& path) {
  const auto b = read_file(path);
  // crc32 over a body followed by its own crc32 is always this constant, so
  // a sealed file is identified by its body crc instead.
  constexpr std::uint32_t kSealedResidue = 0x2144df1c;
  const std::uint32_t whole = crc32(b);
  if (b.size() >= 4 && whole == kSealedResidue) return crc32(std::span(b).first(b.size() - 4));
  return whole;
}

void seal(ByteWriter& w) { w.u32(crc32(w.buffer())); }

std::span<const std::uint8_t> unseal(std::span<const std::uint8_t> bytes, const std::string& what) {
  if (bytes.size() < 4) throw DataError(what + ": file too short for a checksum");
  auto body = bytes.first(bytes.size() - 4);
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body.size(), 4);
  const std::uint32_t actual = crc32(body);
  if (stored != actual)
    throw DataError(what + ": checksum mismatch (stored " + hex32(stored) + ", computed " +
                    hex32(actual) + ")");
  return body;
}

}  // namespace pino
