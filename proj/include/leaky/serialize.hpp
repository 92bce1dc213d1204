#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "leaky/common.hpp"

namespace leaky {

// Little-endian binary stream helpers for checkpoint and matrix files.
class BinaryWriter {
  public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void f64(double v);
    void str(const std::string& s);
    void doubles(const std::vector<double>& v);
    void raw(const void* data, std::size_t len);

    const std::string& bytes() const { return buf_; }
    void save(const std::string& path) const;

  private:
    std::string buf_;
};

class BinaryReader {
  public:
    explicit BinaryReader(std::string bytes) : buf_(std::move(bytes)) {}
    static BinaryReader from_file(const std::string& path);

    std::uint8_t u8();
    std::uint32_t u32();
    std::uint64_t u64();
    double f64();
    std::string str();
    std::vector<double> doubles();
    bool at_end() const { return pos_ == buf_.size(); }

  private:
    void need(std::size_t n);
    std::string buf_;
    std::size_t pos_ = 0;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);
std::uint64_t file_hash(const std::string& path);

}  // namespace leaky
