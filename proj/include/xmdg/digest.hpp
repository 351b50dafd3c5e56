#pragma once

#include <cstddef>
#include <memory>
#include <string>

namespace xmdg {

std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_hex(const std::string& s);

// Incremental SHA-256 for hashing large buffers in pieces.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t len);
  std::string hex_digest();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace xmdg
