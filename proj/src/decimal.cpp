#include "timegate/decimal.hpp"

#include <cctype>
#include <cstdlib>

namespace timegate::num {

namespace {

constexpr __int128 k_int128_max = (~__uint128_t{0}) >> 1;
constexpr int k_max_scale = 37; // 10^38 overflows a signed 128-bit integer

__int128 checked_mul_pow10(__int128 value, int exponent) {
    for (int i = 0; i < exponent; ++i) {
        if (value > k_int128_max / 10 || value < -(k_int128_max / 10))
            throw DecimalError("decimal overflow while scaling");
        value *= 10;
    }
    return value;
}

__int128 checked_add(__int128 a, __int128 b) {
    if (b > 0 && a > k_int128_max - b) throw DecimalError("decimal overflow in addition");
    if (b < 0 && a < -k_int128_max - b) throw DecimalError("decimal overflow in addition");
    return a + b;
}

__int128 checked_mul(__int128 a, __int128 b) {
    if (a == 0 || b == 0) return 0;
    __int128 r = a * b;
    if (r / b != a) throw DecimalError("decimal overflow in multiplication");
    return r;
}

} // namespace

Decimal Decimal::from_int(std::int64_t value) { return Decimal(value, 0); }

Decimal Decimal::parse(const std::string& text) {
    std::size_t i = 0;
    bool negative = false;
    if (i < text.size() && (text[i] == '+' || text[i] == '-')) {
        negative = text[i] == '-';
        ++i;
    }
    __int128 units = 0;
    int scale = 0;
    bool any_digit = false;
    bool in_fraction = false;
    for (; i < text.size(); ++i) {
        char c = text[i];
        if (std::isdigit(static_cast<unsigned char>(c))) {
            units = checked_add(checked_mul_pow10(units, 1), c - '0');
            if (in_fraction) ++scale;
            any_digit = true;
        } else if (c == '.' && !in_fraction) {
            in_fraction = true;
        } else if ((c == 'e' || c == 'E') && any_digit) {
            break;
        } else {
            throw DecimalError("invalid decimal literal: \"" + text + "\"");
        }
    }
    if (!any_digit) throw DecimalError("invalid decimal literal: \"" + text + "\"");
    if (i < text.size()) {
        // Exponent part.
        ++i;
        bool exp_negative = false;
        if (i < text.size() && (text[i] == '+' || text[i] == '-')) {
            exp_negative = text[i] == '-';
            ++i;
        }
        if (i >= text.size()) throw DecimalError("invalid decimal literal: \"" + text + "\"");
        int exponent = 0;
        for (; i < text.size(); ++i) {
            if (!std::isdigit(static_cast<unsigned char>(text[i])))
                throw DecimalError("invalid decimal literal: \"" + text + "\"");
            exponent = exponent * 10 + (text[i] - '0');
            if (exponent > 1000) throw DecimalError("decimal exponent out of range");
        }
        if (exp_negative)
            scale += exponent;
        else if (exponent >= scale) {
            units = checked_mul_pow10(units, exponent - scale);
            scale = 0;
        } else {
            scale -= exponent;
        }
    }
    if (scale > k_max_scale) throw DecimalError("decimal scale out of range");
    Decimal d(negative ? -units : units, scale);
    d.normalize();
    return d;
}

void Decimal::normalize() {
    if (units_ == 0) {
        scale_ = 0;
        return;
    }
    while (scale_ > 0 && units_ % 10 == 0) {
        units_ /= 10;
        --scale_;
    }
}

Decimal Decimal::operator+(const Decimal& other) const {
    int scale = scale_ > other.scale_ ? scale_ : other.scale_;
    if (scale > k_max_scale) throw DecimalError("decimal scale out of range");
    __int128 a = checked_mul_pow10(units_, scale - scale_);
    __int128 b = checked_mul_pow10(other.units_, scale - other.scale_);
    Decimal result(checked_add(a, b), scale);
    result.normalize();
    return result;
}

Decimal Decimal::operator-(const Decimal& other) const {
    Decimal negated(-other.units_, other.scale_);
    return *this + negated;
}

Decimal Decimal::operator*(const Decimal& other) const {
    int scale = scale_ + other.scale_;
    if (scale > k_max_scale) throw DecimalError("decimal scale out of range");
    Decimal result(checked_mul(units_, other.units_), scale);
    result.normalize();
    return result;
}

int Decimal::compare(const Decimal& other) const {
    if ((units_ < 0) != (other.units_ < 0)) return units_ < other.units_ ? -1 : 1;
    Decimal diff = *this - other;
    if (diff.units_ == 0) return 0;
    return diff.units_ < 0 ? -1 : 1;
}

std::string Decimal::to_string() const {
    Decimal canon = *this;
    canon.normalize();
    __uint128_t magnitude =
        canon.units_ < 0 ? static_cast<__uint128_t>(-(canon.units_ + 1)) + 1
                         : static_cast<__uint128_t>(canon.units_);
    std::string digits;
    if (magnitude == 0) digits = "0";
    while (magnitude > 0) {
        digits.insert(digits.begin(), static_cast<char>('0' + static_cast<int>(magnitude % 10)));
        magnitude /= 10;
    }
    while (static_cast<int>(digits.size()) <= canon.scale_) digits.insert(digits.begin(), '0');
    std::string out;
    if (canon.units_ < 0) out += '-';
    out += digits.substr(0, digits.size() - canon.scale_);
    if (canon.scale_ > 0) {
        out += '.';
        out += digits.substr(digits.size() - canon.scale_);
    }
    return out;
}

} // namespace timegate::num
