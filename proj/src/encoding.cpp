#include "soafog/encoding.hpp"
#include "soafog/error.hpp"

#include <openssl/evp.h>
#include <openssl/rand.h>
#include <openssl/sha.h>

#include <charconv>
#include <memory>

namespace soafog {

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::Syntax: return "syntax_error";
    case ErrorCode::Validation: return "validation_error";
    case ErrorCode::EmptyLayer: return "empty_layer";
    case ErrorCode::NonConvexClip: return "non_convex_clip";
    case ErrorCode::KindMismatch: return "kind_mismatch";
    case ErrorCode::DuplicateKey: return "duplicate_key";
    case ErrorCode::MissingKey: return "missing_key";
    case ErrorCode::UnknownLayer: return "unknown_layer";
    case ErrorCode::OversizeImage: return "oversize_image";
    case ErrorCode::BadCredentials: return "bad_credentials";
    case ErrorCode::LockedOut: return "locked_out";
    case ErrorCode::Unauthorized: return "unauthorized";
    case ErrorCode::InvalidChange: return "invalid_change";
    case ErrorCode::BadKeyLength: return "bad_key_length";
    case ErrorCode::StorageFull: return "storage_full";
    case ErrorCode::BudgetUnsatisfiable: return "budget_unsatisfiable";
    case ErrorCode::UnknownProcess: return "unknown_process";
    case ErrorCode::ParamError: return "param_error";
    case ErrorCode::MissingAttr: return "missing_attr";
    case ErrorCode::UnknownNode: return "unknown_node";
    case ErrorCode::BadMac: return "bad_mac";
    case ErrorCode::MalformedItem: return "malformed_item";
    case ErrorCode::ConfigError: return "config_error";
    case ErrorCode::WorkloadMismatch: return "workload_mismatch";
    case ErrorCode::Io: return "io_error";
    }
    return "unknown";
}

std::string hex_encode(std::string_view bytes) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (unsigned char c : bytes) {
        out.push_back(digits[c >> 4]);
        out.push_back(digits[c & 0x0f]);
    }
    return out;
}

std::optional<std::string> hex_decode(std::string_view hex) {
    if (hex.size() % 2 != 0) {
        return std::nullopt;
    }
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    std::string out;
    out.reserve(hex.size() / 2);
    for (std::size_t i = 0; i < hex.size(); i += 2) {
        int hi = nibble(hex[i]);
        int lo = nibble(hex[i + 1]);
        if (hi < 0 || lo < 0) {
            return std::nullopt;
        }
        out.push_back(static_cast<char>((hi << 4) | lo));
    }
    return out;
}

std::string base64_encode(std::string_view bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                            reinterpret_cast<const unsigned char*>(bytes.data()),
                            static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::optional<std::string> base64_decode(std::string_view text) {
    if (text.size() % 4 != 0) {
        return std::nullopt;
    }
    if (text.empty()) {
        return std::string{};
    }
    std::string out(3 * text.size() / 4, '\0');
    int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                            reinterpret_cast<const unsigned char*>(text.data()),
                            static_cast<int>(text.size()));
    if (n < 0) {
        return std::nullopt;
    }
    // EVP_DecodeBlock counts padding as zero bytes.
    std::size_t pad = 0;
    if (text.back() == '=') ++pad;
    if (text.size() >= 2 && text[text.size() - 2] == '=') ++pad;
    out.resize(static_cast<std::size_t>(n) - pad);
    return out;
}

std::string format_number(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[SHA256_DIGEST_LENGTH];
    SHA256(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), digest);
    return hex_encode(std::string_view(reinterpret_cast<const char*>(digest), sizeof digest));
}

std::string random_bytes(std::size_t n) {
    std::string out(n, '\0');
    if (n > 0 && RAND_bytes(reinterpret_cast<unsigned char*>(out.data()), static_cast<int>(n)) != 1) {
        throw Error(ErrorCode::Io, "system random source failed");
    }
    return out;
}

std::string format_uuid_v4(std::string b) {
    b.resize(16, '\0');
    b[6] = static_cast<char>((static_cast<unsigned char>(b[6]) & 0x0f) | 0x40);
    b[8] = static_cast<char>((static_cast<unsigned char>(b[8]) & 0x3f) | 0x80);
    std::string h = hex_encode(b);
    return h.substr(0, 8) + "-" + h.substr(8, 4) + "-" + h.substr(12, 4) + "-" + h.substr(16, 4) + "-" +
           h.substr(20, 12);
}

IdGenerator random_uuid_generator() {
    return [] { return format_uuid_v4(random_bytes(16)); };
}

IdGenerator seeded_uuid_generator(std::uint64_t seed) {
    auto rng = std::make_shared<std::mt19937_64>(seed);
    return [rng] {
        std::string b(16, '\0');
        for (int half = 0; half < 2; ++half) {
            std::uint64_t v = (*rng)();
            for (int i = 0; i < 8; ++i) {
                b[static_cast<std::size_t>(half * 8 + i)] = static_cast<char>((v >> (8 * i)) & 0xff);
            }
        }
        return format_uuid_v4(std::move(b));
    };
}

} // namespace soafog
