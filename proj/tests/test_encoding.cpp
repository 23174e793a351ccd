#include "soafog/encoding.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <regex>
#include <set>

using namespace soafog;

TEST(Encoding, HexRoundTrip) {
    const std::string bytes("\x00\x01\x7f\x80\xff", 5);
    EXPECT_EQ(hex_encode(bytes), "00017f80ff");
    EXPECT_EQ(hex_decode("00017F80ff"), bytes);
    EXPECT_FALSE(hex_decode("abc").has_value());
    EXPECT_FALSE(hex_decode("zz").has_value());
}

TEST(Encoding, Base64KnownValues) {
    EXPECT_EQ(base64_encode(""), "");
    EXPECT_EQ(base64_encode("f"), "Zg==");
    EXPECT_EQ(base64_encode("fo"), "Zm8=");
    EXPECT_EQ(base64_encode("foo"), "Zm9v");
    EXPECT_EQ(base64_encode("foobar"), "Zm9vYmFy");
    EXPECT_EQ(base64_decode("Zm9vYmE="), "fooba");
    EXPECT_FALSE(base64_decode("Zm9v!").has_value());
}

TEST(Encoding, Base64RoundTripRandom) {
    std::mt19937_64 rng(3);
    for (int n = 0; n < 200; ++n) {
        std::string s(static_cast<std::size_t>(n), '\0');
        for (auto& c : s) c = static_cast<char>(rng() & 0xff);
        EXPECT_EQ(base64_decode(base64_encode(s)), s);
    }
}

TEST(Encoding, Sha256KnownValues) {
    EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Encoding, FormatNumberRoundTrips) {
    EXPECT_EQ(format_number(4.0), "4");
    EXPECT_EQ(format_number(0.1), "0.1");
    EXPECT_EQ(format_number(-2.5), "-2.5");
    std::mt19937_64 rng(9);
    for (int i = 0; i < 1000; ++i) {
        const double v = (unit_uniform(rng) - 0.5) * std::pow(10.0, static_cast<int>(rng() % 20) - 10);
        EXPECT_EQ(std::stod(format_number(v)), v);
    }
}

TEST(Encoding, UuidShape) {
    const std::regex shape("[0-9a-f]{8}-[0-9a-f]{4}-4[0-9a-f]{3}-[89ab][0-9a-f]{3}-[0-9a-f]{12}");
    auto gen = random_uuid_generator();
    std::set<std::string> seen;
    for (int i = 0; i < 100; ++i) {
        auto id = gen();
        EXPECT_TRUE(std::regex_match(id, shape)) << id;
        seen.insert(id);
    }
    EXPECT_EQ(seen.size(), 100u);
}

TEST(Encoding, SeededUuidsRepeat) {
    auto a = seeded_uuid_generator(5);
    auto b = seeded_uuid_generator(5);
    auto c = seeded_uuid_generator(6);
    for (int i = 0; i < 10; ++i) {
        const auto x = a();
        EXPECT_EQ(x, b());
        EXPECT_NE(x, c());
    }
}
