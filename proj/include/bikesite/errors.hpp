#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace bikesite {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class GeometryError : public Error {
 public:
  using Error::Error;
};

/// A cell, city or column that was asked for but is not there.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// Input data that is structurally fine but violates a contract
/// (single-class training set, too few negatives, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

class NetworkError : public Error {
 public:
  using Error::Error;
};

class BoundaryNotFound : public Error {
 public:
  explicit BoundaryNotFound(std::string city)
      : Error("boundary not found for city '" + city + "'"), city_(std::move(city)) {}
  const std::string& city() const noexcept { return city_; }

 private:
  std::string city_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t byte_offset)
      : Error(what + " (at byte " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}
  std::size_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

/// One iteration of a repeated experiment failed.
class ExperimentError : public Error {
 public:
  ExperimentError(const std::string& what, std::uint64_t seed)
      : Error(what + " (seed " + std::to_string(seed) + ")"), seed_(seed) {}
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
};

}  // namespace bikesite
