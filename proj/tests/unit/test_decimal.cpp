#include <doctest.h>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "timegate/decimal.hpp"

using timegate::num::Decimal;
using timegate::num::DecimalError;

namespace {

// Random decimals bounded so that any product stays far from the 128-bit
// limit (|units| <= 1e12, scale <= 12 → products <= 1e24 at scale <= 24).
Decimal random_decimal(std::mt19937_64& rng) {
    std::uniform_int_distribution<std::int64_t> units(-1000000000000LL, 1000000000000LL);
    std::uniform_int_distribution<int> scale(0, 12);
    std::int64_t u = units(rng);
    int s = scale(rng);
    std::string text = std::to_string(u) + "e-" + std::to_string(s);
    return Decimal::parse(text);
}

} // namespace

TEST_SUITE_BEGIN("decimal");

TEST_CASE("parse accepts plain, fractional, signed and exponent forms") {
    CHECK(Decimal::parse("0").to_string() == "0");
    CHECK(Decimal::parse("42").to_string() == "42");
    CHECK(Decimal::parse("-42").to_string() == "-42");
    CHECK(Decimal::parse("+42").to_string() == "42");
    CHECK(Decimal::parse("0.5").to_string() == "0.5");
    CHECK(Decimal::parse(".5").to_string() == "0.5");
    CHECK(Decimal::parse("1.").to_string() == "1");
    CHECK(Decimal::parse("2e-6").to_string() == "0.000002");
    CHECK(Decimal::parse("2E-6").to_string() == "0.000002");
    CHECK(Decimal::parse("2.5e3").to_string() == "2500");
    CHECK(Decimal::parse("1.25e+2").to_string() == "125");
    CHECK(Decimal::parse("1.25e2").to_string() == "125");
    CHECK(Decimal::parse("12.345e1").to_string() == "123.45");
}

TEST_CASE("canonical form strips trailing zeros and folds negative zero") {
    CHECK(Decimal::parse("1.500").to_string() == "1.5");
    CHECK(Decimal::parse("0.000").to_string() == "0");
    CHECK(Decimal::parse("-0.0").to_string() == "0");
    CHECK(Decimal::parse("-0").to_string() == "0");
    CHECK(Decimal::parse("100").to_string() == "100"); // integer zeros survive
    CHECK(Decimal::parse("0.010").to_string() == "0.01");
}

TEST_CASE("arithmetic goldens match an independent computation") {
    // Values cross-checked with a decimal library elsewhere.
    CHECK((Decimal::parse("0.1") + Decimal::parse("0.2")).to_string() == "0.3");
    CHECK((Decimal::parse("1.5") * Decimal::parse("-2.25")).to_string() == "-3.375");
    CHECK((Decimal::parse("-0.0001") - Decimal::parse("0.0001")).to_string() == "-0.0002");
    CHECK((Decimal::parse("123456789.987654321") * Decimal::parse("1000000")).to_string() ==
          "123456789987654.321");
    CHECK((Decimal::parse("0.0000001") * Decimal::parse("0.0000001")).to_string() ==
          "0.00000000000001");
    Decimal sum37 = Decimal::parse("0.9999999999999999999999999999999999999") +
                    Decimal::parse("0.0000000000000000000000000000000000001");
    CHECK(sum37.to_string() == "1");
    // Token-cost shape: counts times per-token prices.
    Decimal cost = Decimal::from_int(1000) * Decimal::parse("0.000002") +
                   Decimal::from_int(100) * Decimal::parse("0.000006");
    CHECK(cost.to_string() == "0.0026");
}

TEST_CASE("malformed literals throw") {
    const std::vector<std::string> bad = {"",     "-",    "+",   "abc", "1..2", "1e",
                                          "1e+",  "1e1.5", "--1", "1,5", ".",   "e5",
                                          "0x10", "1 "};
    for (const auto& text : bad) {
        CAPTURE(text);
        CHECK_THROWS_AS(Decimal::parse(text), DecimalError);
    }
}

TEST_CASE("magnitude and scale limits are enforced") {
    // 1.70e38 still fits in a signed 128-bit integer; 2e38 does not.
    CHECK_NOTHROW(Decimal::parse("170000000000000000000000000000000000000"));
    CHECK_THROWS_AS(Decimal::parse("200000000000000000000000000000000000000"), DecimalError);
    CHECK_NOTHROW(Decimal::parse("1e38")); // 1.0e38 < 2^127
    CHECK_THROWS_AS(Decimal::parse("1e39"), DecimalError);
    CHECK_NOTHROW(Decimal::parse("1e-37"));
    CHECK_THROWS_AS(Decimal::parse("1e-38"), DecimalError);
    // The scale cap applies to the written form, before canonicalization.
    CHECK_THROWS_AS(Decimal::parse("0.00000000000000000000000000000000000010"), DecimalError);
    // Products past the scale cap are rejected rather than rounded.
    CHECK_THROWS_AS(Decimal::parse("1e-20") * Decimal::parse("1e-20"), DecimalError);
    // Sums near the magnitude limit are rejected rather than wrapped.
    Decimal big = Decimal::parse("170000000000000000000000000000000000000");
    CHECK_THROWS_AS(big + big, DecimalError);
}

TEST_CASE("comparison agrees with the numeric order") {
    CHECK(Decimal::parse("0.1") < Decimal::parse("0.2"));
    CHECK(Decimal::parse("-5") < Decimal::parse("0.0001"));
    CHECK(Decimal::parse("1.50") == Decimal::parse("1.5"));
    CHECK(Decimal::parse("2e-6") == Decimal::parse("0.000002"));
    CHECK(Decimal::parse("10") > Decimal::parse("9.999999"));
    CHECK(Decimal::parse("-0.0") == Decimal::parse("0"));
    CHECK(Decimal::parse("-1") < Decimal::parse("1"));
    // Sign-first comparison also protects extremes from overflow.
    Decimal big = Decimal::parse("170000000000000000000000000000000000000");
    Decimal small = Decimal::parse("-170000000000000000000000000000000000000");
    CHECK(small < big);
}

TEST_CASE("algebraic laws hold over random values") {
    std::mt19937_64 rng(77);
    for (int i = 0; i < 3000; ++i) {
        Decimal a = random_decimal(rng);
        Decimal b = random_decimal(rng);
        Decimal c = random_decimal(rng);
        CHECK(a + b == b + a);
        CHECK((a + b) + c == a + (b + c));
        CHECK(a * b == b * a);
        CHECK(a * (b + c) == a * b + a * c);
        CHECK(a - b + b == a);
        CHECK((a - b).is_negative() == (a < b));
        CHECK((a == b) == (a.to_string() == b.to_string()));
        // String round-trip is exact.
        CHECK(Decimal::parse(a.to_string()) == a);
    }
}

TEST_CASE("predicates") {
    CHECK(Decimal::parse("0").is_zero());
    CHECK_FALSE(Decimal::parse("0.0001").is_zero());
    CHECK(Decimal::parse("-0.0001").is_negative());
    CHECK_FALSE(Decimal::parse("0").is_negative());
    CHECK(Decimal::from_int(-3).is_negative());
    CHECK(Decimal::from_int(0).is_zero());
}

TEST_SUITE_END();
