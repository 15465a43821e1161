#pragma once

// Little-endian primitive readers/writers shared by the checkpoint formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "invp/error.hpp"

namespace invp::detail {

static_assert(std::endian::native == std::endian::little, "checkpoint formats assume a little-endian host");

class BinaryWriter {
public:
    explicit BinaryWriter(const std::filesystem::path& path) : out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) throw Error("cannot open " + path.string() + " for writing");
    }

    void bytes(const void* data, std::size_t size) { out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(size)); }

    template <class T>
    void put(T value) {
        bytes(&value, sizeof(T));
    }

    void finish() {
        out_.flush();
        if (!out_) throw Error("write failed");
    }

private:
    std::ofstream out_;
};

// Reads a whole file into memory and hands out values with offset tracking.
class BinaryReader {
public:
    BinaryReader(const std::filesystem::path& path, std::string what) : what_(std::move(what)) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw FormatError(what_ + ": cannot open " + path.string());
        data_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }

    std::size_t offset() const { return offset_; }
    std::size_t size() const { return data_.size(); }
    std::size_t remaining() const { return data_.size() - offset_; }

    void require(std::size_t count) const {
        if (remaining() < count) {
            throw FormatError(what_ + ": truncated at byte offset " + std::to_string(offset_) + ", expected " +
                              std::to_string(count) + " more bytes, found " + std::to_string(remaining()));
        }
    }

    void bytes(void* dst, std::size_t count) {
        require(count);
        std::memcpy(dst, data_.data() + offset_, count);
        offset_ += count;
    }

    template <class T>
    T get() {
        T value;
        bytes(&value, sizeof(T));
        return value;
    }

private:
    std::string what_;
    std::vector<char> data_;
    std::size_t offset_ = 0;
};

}  // namespace invp::detail
