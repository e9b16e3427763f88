#pragma once

#include <stdexcept>
#include <string>

namespace aqflow {

// Malformed files, bad records, sort-order violations.
class io_error : public std::runtime_error {
public:
    explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite intermediates, diverging solves, undefined ratios.
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace aqflow
