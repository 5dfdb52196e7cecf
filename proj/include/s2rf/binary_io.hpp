#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace s2rf {

/// Thrown when a binary file is truncated or carries the wrong magic/version.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Little-endian byte sink.
class ByteWriter {
public:
    void magic(std::string_view m) { bytes_.insert(bytes_.end(), m.begin(), m.end()); }
    void u8(uint8_t v) { bytes_.push_back(v); }
    void u32(uint32_t v) { put(v, 4); }
    void u64(uint64_t v) { put(v, 8); }
    void f32(float v) { u32(std::bit_cast<uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<uint64_t>(v)); }

    const std::vector<uint8_t>& bytes() const { return bytes_; }
    std::vector<uint8_t> take() { return std::move(bytes_); }

private:
    void put(uint64_t v, int n) {
        for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    std::vector<uint8_t> bytes_;
};

/// Little-endian byte source with bounds checking.
class ByteReader {
public:
    explicit ByteReader(std::span<const uint8_t> bytes) : bytes_(bytes) {}

    void expect_magic(std::string_view m) {
        need(m.size());
        if (std::memcmp(bytes_.data() + pos_, m.data(), m.size()) != 0)
            throw FormatError("bad magic, expected \"" + std::string(m) + "\"");
        pos_ += m.size();
    }
    uint8_t u8() {
        need(1);
        return bytes_[pos_++];
    }
    uint32_t u32() { return static_cast<uint32_t>(get(4)); }
    uint64_t u64() { return get(8); }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }

    size_t remaining() const { return bytes_.size() - pos_; }
    void need(size_t n) const {
        if (remaining() < n) throw FormatError("unexpected end of data");
    }

private:
    uint64_t get(int n) {
        need(size_t(n));
        uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= uint64_t(bytes_[pos_ + i]) << (8 * i);
        pos_ += size_t(n);
        return v;
    }
    std::span<const uint8_t> bytes_;
    size_t pos_ = 0;
};

}  // namespace s2rf
