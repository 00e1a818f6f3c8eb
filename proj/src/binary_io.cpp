// Copyright 2026 The dift Authors
// SPDX-License-Identifier: Apache-2.0

#include "dift/binary_io.hpp"

#include "dift/common.hpp"

#include <fstream>
#include <iterator>

namespace dift {

void ByteWriter::put_magic(std::string_view magic)
{
    const auto *p = reinterpret_cast<const std::uint8_t *>(magic.data());
    bytes_.insert(bytes_.end(), p, p + magic.size());
}

void ByteWriter::put_string(std::string_view s)
{
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    put_magic(s);
}

void ByteReader::expect_magic(std::string_view magic)
{
    const auto *p = take(magic.size());
    if (std::memcmp(p, magic.data(), magic.size()) != 0)
        throw DataError(context_ + ": bad magic, expected " + std::string(magic));
}

std::string ByteReader::get_string()
{
    const auto n = get<std::uint32_t>();
    const auto *p = take(n);
    return std::string(reinterpret_cast<const char *>(p), n);
}

std::span<const std::uint8_t> ByteReader::get_bytes(std::size_t n)
{
    const auto *p = take(n);
    return {p, n};
}

void ByteReader::seek(std::size_t offset)
{
    if (offset > bytes_.size()) throw DataError(context_ + ": seek past end of data");
    offset_ = offset;
}

const std::uint8_t *ByteReader::take(std::size_t n)
{
    if (n > bytes_.size() - offset_)
        throw DataError(context_ + ": truncated (needed " + std::to_string(n) + " bytes at offset " +
                        std::to_string(offset_) + ")");
    const auto *p = bytes_.data() + offset_;
    offset_ += n;
    return p;
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (auto b : bytes) {
        h ^= b;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    std::vector<std::uint8_t> bytes(size);
    if (size > 0 && !in.read(reinterpret_cast<char *>(bytes.data()), static_cast<std::streamsize>(size)))
        throw IoError("cannot read " + path.string());
    return bytes;
}

void write_file(const std::filesystem::path &path, std::span<const std::uint8_t> bytes)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot create " + tmp.string());
        out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw IoError("write failed for " + tmp.string() + " (disk full?)");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

void write_text_file(const std::filesystem::path &path, std::string_view text)
{
    write_file(path, {reinterpret_cast<const std::uint8_t *>(text.data()), text.size()});
}

} // namespace dift
