#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <string_view>

namespace soafog {

std::string hex_encode(std::string_view bytes);
std::optional<std::string> hex_decode(std::string_view hex);

std::string base64_encode(std::string_view bytes);
std::optional<std::string> base64_decode(std::string_view text);

/// Shortest decimal text that round-trips to the same double.
std::string format_number(double v);

/// Lower-case hex SHA-256 of `bytes`.
std::string sha256_hex(std::string_view bytes);

/// `n` bytes from the system CSPRNG.
std::string random_bytes(std::size_t n);

/// Formats 16 bytes as an RFC 4122 version-4 UUID string.
std::string format_uuid_v4(std::string bytes16);

using IdGenerator = std::function<std::string()>;

/// UUIDs from the system CSPRNG.
IdGenerator random_uuid_generator();

/// Reproducible UUIDs for simulation runs.
IdGenerator seeded_uuid_generator(std::uint64_t seed);

/// Uniform double in [0, 1) built from the top 53 bits, so the stream is the
/// same on every standard library (std::uniform_real_distribution is not).
inline double unit_uniform(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

} // namespace soafog
