#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace bellpulse {

/// Invalid or inconsistent configuration (bad slot geometry, empty manifest, ...).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input data (file contents, binary records).
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::uint64_t byte_offset)
        : std::runtime_error(what + " (byte offset " + std::to_string(byte_offset) + ")"),
          offset(byte_offset) {}
    explicit ParseError(const std::string& what) : std::runtime_error(what), offset(0) {}

    std::uint64_t offset;
};

/// Well-formed input that cannot be processed (missing files, empty samples,
/// zero-count correlations, domain violations).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Pulse-numbering recovery failed (no modulation visible, inconsistent blocks).
class SyncError : public DataError {
public:
    explicit SyncError(const std::string& what) : DataError(what) {}
};

} // namespace bellpulse
