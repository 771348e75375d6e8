#pragma once

/// @file ids.hpp
/// Stable 128-bit identifiers for graph nodes and edges.
///
/// Identifiers are drawn once from a random stream when an element is created
/// and never change afterwards; weight inheritance is keyed on them.

#include <compare>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace topoevo {

namespace detail {

inline constexpr char kHexDigits[] = "0123456789abcdef";

inline int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

inline void append_hex64(std::string& out, std::uint64_t v) {
    for (int shift = 60; shift >= 0; shift -= 4) out.push_back(kHexDigits[(v >> shift) & 0xF]);
}

} // namespace detail

/// Opaque 128-bit identifier. `Tag` keeps node and edge ids from mixing.
template <typename Tag>
struct Id {
    std::uint64_t hi = 0;
    std::uint64_t lo = 0;

    friend constexpr auto operator<=>(const Id&, const Id&) = default;

    [[nodiscard]] bool is_nil() const noexcept { return hi == 0 && lo == 0; }

    [[nodiscard]] std::string to_hex() const {
        std::string s;
        s.reserve(32);
        detail::append_hex64(s, hi);
        detail::append_hex64(s, lo);
        return s;
    }

    static Id from_hex(std::string_view text) {
        if (text.size() != 32) throw std::invalid_argument("id must be 32 hex digits: " + std::string(text));
        Id id;
        for (std::size_t i = 0; i < 32; ++i) {
            const int v = detail::hex_value(text[i]);
            if (v < 0) throw std::invalid_argument("bad hex digit in id: " + std::string(text));
            auto& word = i < 16 ? id.hi : id.lo;
            word = (word << 4) | static_cast<std::uint64_t>(v);
        }
        return id;
    }

    /// Draws a fresh non-nil id from `rng`.
    template <typename Rng>
    static Id random(Rng& rng) {
        std::uniform_int_distribution<std::uint64_t> dist;
        Id id;
        do {
            id.hi = dist(rng);
            id.lo = dist(rng);
        } while (id.is_nil());
        return id;
    }
};

struct NodeTag {};
struct EdgeTag {};
using NodeId = Id<NodeTag>;
using EdgeId = Id<EdgeTag>;

} // namespace topoevo

template <typename Tag>
struct std::hash<topoevo::Id<Tag>> {
    std::size_t operator()(const topoevo::Id<Tag>& id) const noexcept {
        return static_cast<std::size_t>(id.hi ^ (id.lo * 0x9E3779B97F4A7C15ULL));
    }
};
