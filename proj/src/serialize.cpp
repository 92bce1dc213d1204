#include "leaky/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace leaky {

namespace {
// File formats are little-endian; big-endian hosts would need swaps here.
static_assert(std::endian::native == std::endian::little,
              "little-endian host required");

template <typename T>
T le_load(const char* p) {
    T v;
    std::memcpy(&v, p, sizeof v);
    return v;
}

template <typename T>
void le_store(std::string& buf, T v) {
    char tmp[sizeof v];
    std::memcpy(tmp, &v, sizeof v);
    buf.append(tmp, sizeof v);
}
}  // namespace

void BinaryWriter::u32(std::uint32_t v) { le_store(buf_, v); }
void BinaryWriter::u64(std::uint64_t v) { le_store(buf_, v); }

void BinaryWriter::f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    le_store(buf_, bits);
}

void BinaryWriter::str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
}

void BinaryWriter::doubles(const std::vector<double>& v) {
    u64(v.size());
    for (double d : v) f64(d);
}

void BinaryWriter::raw(const void* data, std::size_t len) {
    buf_.append(static_cast<const char*>(data), len);
}

void BinaryWriter::save(const std::string& path) const { write_file(path, buf_); }

BinaryReader BinaryReader::from_file(const std::string& path) {
    return BinaryReader(read_file(path));
}

void BinaryReader::need(std::size_t n) {
    require(pos_ + n <= buf_.size(), ErrorKind::ingest,
            "binary stream truncated");
}

std::uint8_t BinaryReader::u8() {
    need(1);
    return static_cast<std::uint8_t>(buf_[pos_++]);
}

std::uint32_t BinaryReader::u32() {
    need(4);
    auto v = le_load<std::uint32_t>(buf_.data() + pos_);
    pos_ += 4;
    return v;
}

std::uint64_t BinaryReader::u64() {
    need(8);
    auto v = le_load<std::uint64_t>(buf_.data() + pos_);
    pos_ += 8;
    return v;
}

double BinaryReader::f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
}

std::string BinaryReader::str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
}

std::vector<double> BinaryReader::doubles() {
    const std::uint64_t n = u64();
    std::vector<double> v(n);
    for (auto& d : v) d = f64();
    return v;
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), ErrorKind::ingest, "cannot open file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary);
    require(f.good(), ErrorKind::ingest, "cannot write file: " + path);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(f.good(), ErrorKind::ingest, "short write: " + path);
}

std::uint64_t file_hash(const std::string& path) {
    const std::string bytes = read_file(path);
    return fnv1a64(bytes.data(), bytes.size());
}

}  // namespace leaky
