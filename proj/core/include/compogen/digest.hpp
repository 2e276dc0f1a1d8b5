// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace compogen {

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws Error(Errc::Protocol) on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// 64-bit FNV-1a; stable across platforms, used to key mock backends.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) noexcept;
std::uint64_t fnv1a64(std::string_view text) noexcept;

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Hierarchical seeding: child seeds depend only on (parent, label), so adding
/// siblings never perturbs existing streams.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view label) noexcept;
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) noexcept;

/// Portable random stream. std::mt19937_64 output is fully specified by the
/// standard; the std distributions are not, so values are mapped by hand.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : m_engine(seed) {}

    std::uint64_t next() { return m_engine(); }
    /// Uniform in [0, 1) with 53 bits of precision.
    double uniform() { return static_cast<double>(m_engine() >> 11) * 0x1.0p-53; }
    /// Uniform integer in [lo, hi] (inclusive).
    long long uniform_int(long long lo, long long hi);

private:
    std::mt19937_64 m_engine;
};

}  // namespace compogen
