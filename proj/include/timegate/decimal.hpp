#pragma once

#include <cstdint>
#include <string>

#include "timegate/error.hpp"

namespace timegate::num {

class DecimalError : public Error {
public:
    using Error::Error;
};

// Exact decimal arithmetic for money: value = units / 10^scale.
// Used for token-cost accounting where binary floating point would
// accumulate rounding error across sums.
class Decimal {
public:
    Decimal() = default;
    static Decimal from_int(std::int64_t value);
    // Accepts [-]digits[.digits][(e|E)[-+]digits].
    static Decimal parse(const std::string& text);

    Decimal operator+(const Decimal& other) const;
    Decimal operator-(const Decimal& other) const;
    Decimal operator*(const Decimal& other) const;

    bool operator==(const Decimal& other) const { return compare(other) == 0; }
    bool operator!=(const Decimal& other) const { return compare(other) != 0; }
    bool operator<(const Decimal& other) const { return compare(other) < 0; }
    bool operator<=(const Decimal& other) const { return compare(other) <= 0; }
    bool operator>(const Decimal& other) const { return compare(other) > 0; }
    bool operator>=(const Decimal& other) const { return compare(other) >= 0; }

    int compare(const Decimal& other) const;
    bool is_negative() const { return units_ < 0; }
    bool is_zero() const { return units_ == 0; }

    // Canonical form: no trailing fractional zeros, no bare trailing dot.
    std::string to_string() const;

private:
    Decimal(__int128 units, int scale) : units_(units), scale_(scale) {}
    void normalize();

    __int128 units_ = 0;
    int scale_ = 0;
};

} // namespace timegate::num
