#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cifuv {

// 256-bit digest, stored big-endian (bytes[0] is the most significant byte).
struct Hash256 {
    std::array<std::uint8_t, 32> bytes{};

    static Hash256 zero() { return Hash256{}; }

    bool is_zero() const {
        for (auto b : bytes)
            if (b != 0) return false;
        return true;
    }

    std::string hex() const;
    static std::optional<Hash256> from_hex(std::string_view hex);

    friend bool operator==(const Hash256&, const Hash256&) = default;
    friend auto operator<=>(const Hash256& a, const Hash256& b) {
        return std::memcmp(a.bytes.data(), b.bytes.data(), 32) <=> 0;
    }
};

struct Hash256Hasher {
    std::size_t operator()(const Hash256& h) const {
        std::uint64_t v;
        std::memcpy(&v, h.bytes.data(), sizeof(v));
        return static_cast<std::size_t>(v);
    }
};

Hash256 sha256(std::span<const std::uint8_t> data);
Hash256 sha256(std::string_view data);

// Hash of the concatenation a || b (Merkle interior nodes).
Hash256 sha256_pair(const Hash256& a, const Hash256& b);

// Number of leading zero bits of the digest, counted from bytes[0]'s MSB.
int leading_zero_bits(const Hash256& h);

} // namespace cifuv
