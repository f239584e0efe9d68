#pragma once

#include <stdexcept>
#include <string>

namespace timegate {

// Base class for every domain error raised by this library. Subsystems
// derive one type per failure condition so callers can catch precisely.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what): std::runtime_error(what) {}
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace timegate
