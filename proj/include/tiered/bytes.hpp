#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "tiered/error.hpp"

namespace tiered {

static_assert(
        std::endian::native == std::endian::little,
        "binary formats are written little-endian and assume a little-endian host");

/// Append-only little-endian byte sink used by the index and shard formats.
class ByteWriter {
  public:
    template <typename T>
        requires std::is_trivially_copyable_v<T>
    void put(const T& v) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
        buf_.insert(buf_.end(), p, p + sizeof(T));
    }

    template <typename T>
        requires std::is_trivially_copyable_v<T>
    void put_span(std::span<const T> v) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(v.data());
        buf_.insert(buf_.end(), p, p + v.size_bytes());
    }

    void put_magic(std::string_view magic) {
        buf_.insert(buf_.end(), magic.begin(), magic.end());
    }

    const std::vector<std::uint8_t>& bytes() const {
        return buf_;
    }
    std::vector<std::uint8_t> take() {
        return std::move(buf_);
    }

  private:
    std::vector<std::uint8_t> buf_;
};

/// Bounds-checked reader; every overrun throws ErrorKind::Format.
class ByteReader {
  public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    template <typename T>
        requires std::is_trivially_copyable_v<T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    template <typename T>
        requires std::is_trivially_copyable_v<T>
    void get_into(std::span<T> out) {
        need(out.size_bytes());
        std::memcpy(out.data(), data_.data() + pos_, out.size_bytes());
        pos_ += out.size_bytes();
    }

    void expect_magic(std::string_view magic) {
        need(magic.size());
        if (std::memcmp(data_.data() + pos_, magic.data(), magic.size()) != 0) {
            throw_error(
                    ErrorKind::Format,
                    "bad magic, expected '" + std::string(magic) + "'");
        }
        pos_ += magic.size();
    }

    std::size_t remaining() const {
        return data_.size() - pos_;
    }

  private:
    void need(std::size_t n) const {
        if (n > data_.size() - pos_) {
            throw_error(ErrorKind::Format, "truncated input");
        }
    }

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> data);
void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

/// 64-bit FNV-1a content digest rendered as 16 hex characters.
std::string content_digest(std::span<const std::uint8_t> data);
std::string content_digest(std::string_view text);
std::string file_digest(const std::filesystem::path& path);

} // namespace tiered
