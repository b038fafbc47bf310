#include <catch2/catch_amalgamated.hpp>

#include "bk/common.hpp"
#include "bk/prng.hpp"
#include "bk/sha256.hpp"

using namespace bk;

TEST_CASE("rfc3339 formatting and parsing round-trip") {
    int64_t micros = 1757412000000000;  // 2025-09-09T10:00:00Z
    std::string text = format_rfc3339(micros);
    CHECK(text == "2025-09-09T10:00:00.000000Z");
    CHECK(parse_rfc3339(text) == micros);

    int64_t with_frac = micros + 123456;
    CHECK(parse_rfc3339(format_rfc3339(with_frac)) == with_frac);
}

TEST_CASE("rfc3339 accepts second precision and short fractions") {
    CHECK(parse_rfc3339("2025-09-09T10:00:00Z") == 1757412000000000);
    CHECK(parse_rfc3339("2025-09-09T10:00:00.5Z") == 1757412000500000);
}

TEST_CASE("rfc3339 rejects malformed input") {
    CHECK_THROWS_AS(parse_rfc3339("2025-09-09 10:00:00Z"), ValidationError);
    CHECK_THROWS_AS(parse_rfc3339("2025-09-09T10:00:00"), ValidationError);
    CHECK_THROWS_AS(parse_rfc3339("2025-09-09T10:00:00+02:00"), ValidationError);
    CHECK_THROWS_AS(parse_rfc3339("2025-13-09T10:00:00Z"), ValidationError);
    CHECK_THROWS_AS(parse_rfc3339("not a time"), ValidationError);
}

TEST_CASE("compact timestamp format") {
    CHECK(format_compact_utc(1757412000000000) == "20250909T100000Z");
}

TEST_CASE("equal-precision timestamps sort chronologically as strings") {
    int64_t base = 1757412000000000;
    std::string a = format_rfc3339(base);
    std::string b = format_rfc3339(base + 1);
    std::string c = format_rfc3339(base + 1000000);
    CHECK(a < b);
    CHECK(b < c);
}

TEST_CASE("decimal formatting") {
    CHECK(format_fixed6(1.5) == "1.500000");
    CHECK(format_decimal(1.5) == "1.5");
    CHECK(format_decimal(2.0) == "2");
    CHECK(format_decimal(0.000001) == "0.000001");
    CHECK(round6(1.23456789) == Catch::Approx(1.234568).epsilon(1e-12));
}

TEST_CASE("sha256 FIPS 180-4 vectors") {
    CHECK(Sha256::hex_digest("") ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(Sha256::hex_digest("abc") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(Sha256::hex_digest("The quick brown fox jumps over the lazy dog") ==
          "d7a8fbb307d7809469ca9abcb0082e4f8d5651e46d3cdb762d02d0bf37c9e592");
}

TEST_CASE("sha256 streaming matches one-shot across block boundaries") {
    std::string data(200, 'x');
    Sha256 h;
    h.update(data.data(), 63);
    h.update(data.data() + 63, 137);
    auto digest = h.finish();
    std::string hex;
    for (uint8_t b : digest) {
        static const char* k = "0123456789abcdef";
        hex.push_back(k[b >> 4]);
        hex.push_back(k[b & 0xf]);
    }
    CHECK(hex == Sha256::hex_digest(data));
}

TEST_CASE("prng is deterministic and stays in range") {
    Xorshift64Star a(42), b(42);
    for (int i = 0; i < 1000; ++i) {
        double va = a.next_symmetric();
        CHECK(va == b.next_symmetric());
        CHECK(va >= -1.0);
        CHECK(va < 1.0);
    }
    // zero seed must not collapse the generator
    Xorshift64Star z(0);
    CHECK(z.next_u64() != 0);
    CHECK(z.next_u64() != z.next_u64());
}
