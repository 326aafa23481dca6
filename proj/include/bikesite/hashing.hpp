#pragma once

#include <string>
#include <string_view>

namespace bikesite {

/// Lowercase hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view bytes);

/// Incremental SHA-256; each part is length-prefixed so that
/// ("ab","c") and ("a","bc") hash differently.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& add(std::string_view part);
  std::string hex();

 private:
  void* ctx_;
};

}  // namespace bikesite
