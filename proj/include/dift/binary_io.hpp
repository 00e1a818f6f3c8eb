// Copyright 2026 The dift Authors
// SPDX-License-Identifier: Apache-2.0

// Little-endian byte buffers for the on-disk containers. Every container
// starts with an 8-byte ASCII magic and a u32 version.

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

namespace dift {

class ByteWriter {
public:
    template <typename T>
        requires std::is_arithmetic_v<T>
    void put(T value)
    {
        static_assert(std::endian::native == std::endian::little, "little-endian host required");
        const auto *p = reinterpret_cast<const std::uint8_t *>(&value);
        bytes_.insert(bytes_.end(), p, p + sizeof(T));
    }

    template <typename T>
        requires std::is_arithmetic_v<T>
    void put_array(std::span<const T> values)
    {
        const auto *p = reinterpret_cast<const std::uint8_t *>(values.data());
        bytes_.insert(bytes_.end(), p, p + values.size_bytes());
    }

    void put_magic(std::string_view magic);
    void put_string(std::string_view s);
    void put_bytes(std::span<const std::uint8_t> b) { bytes_.insert(bytes_.end(), b.begin(), b.end()); }

    std::size_t size() const { return bytes_.size(); }
    const std::vector<std::uint8_t> &bytes() const { return bytes_; }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked reader. Any overrun throws DataError naming `context`.
class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> bytes, std::string context)
        : bytes_(bytes), context_(std::move(context)) {}

    template <typename T>
        requires std::is_arithmetic_v<T>
    T get()
    {
        T value;
        std::memcpy(&value, take(sizeof(T)), sizeof(T));
        return value;
    }

    template <typename T>
        requires std::is_arithmetic_v<T>
    void get_array(std::span<T> out)
    {
        if (!out.empty()) std::memcpy(out.data(), take(out.size_bytes()), out.size_bytes());
    }

    void expect_magic(std::string_view magic);
    std::string get_string();
    std::span<const std::uint8_t> get_bytes(std::size_t n);

    std::size_t offset() const { return offset_; }
    std::size_t remaining() const { return bytes_.size() - offset_; }
    void seek(std::size_t offset);

private:
    const std::uint8_t *take(std::size_t n);

    std::span<const std::uint8_t> bytes_;
    std::size_t offset_ = 0;
    std::string context_;
};

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path &path);
/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
void write_file(const std::filesystem::path &path, std::span<const std::uint8_t> bytes);
void write_text_file(const std::filesystem::path &path, std::string_view text);

} // namespace dift
