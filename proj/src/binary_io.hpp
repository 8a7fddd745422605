#pragma once

#include "harmoniser/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <iterator>
#include <ostream>
#include <string>
#include <string_view>
#include <type_traits>

namespace harmoniser::detail {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class ByteWriter {
public:
    template <typename T>
    void put(T value) {
        static_assert(std::is_trivially_copyable_v<T>);
        char raw[sizeof(T)];
        std::memcpy(raw, &value, sizeof(T));
        buf_.append(raw, sizeof(T));
    }
    void put_bytes(std::string_view bytes) { buf_.append(bytes); }
    /// u16 length prefix followed by the bytes.
    void put_short_string(std::string_view s) {
        if (s.size() > UINT16_MAX) throw Error(ErrorCode::InvalidArgument, "string longer than 65535 bytes");
        put<std::uint16_t>(static_cast<std::uint16_t>(s.size()));
        put_bytes(s);
    }
    const std::string& bytes() const noexcept { return buf_; }

private:
    std::string buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::string_view data) : data_(data) {}

    template <typename T>
    T get() {
        static_assert(std::is_trivially_copyable_v<T>);
        need(sizeof(T));
        T value;
        std::memcpy(&value, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }
    std::string_view get_bytes(std::size_t n) {
        need(n);
        auto out = data_.substr(pos_, n);
        pos_ += n;
        return out;
    }
    std::string get_short_string() { return std::string(get_bytes(get<std::uint16_t>())); }

    std::size_t remaining() const noexcept { return data_.size() - pos_; }
    std::size_t position() const noexcept { return pos_; }

private:
    void need(std::size_t n) const {
        if (n > remaining()) {
            throw Error(ErrorCode::TruncatedFile, "need " + std::to_string(n) + " bytes at offset " +
                                                      std::to_string(pos_) + ", have " +
                                                      std::to_string(remaining()));
        }
    }

    std::string_view data_;
    std::size_t pos_ = 0;
};

inline std::string slurp(std::istream& in) {
    std::string data{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    if (in.bad()) throw Error(ErrorCode::Io, "read failed");
    return data;
}

}  // namespace harmoniser::detail
