#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

namespace kgst {

/// Incremental SHA-256, hex-encoded. Used for weight digests, vocabulary
/// hashes and the repro manifest.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, size_t len);
  void update(std::string_view text) { update(text.data(), text.size()); }
  void update_f64(const double* data, size_t count) {
    update(data, count * sizeof(double));
  }

  // Finalizes and returns the lowercase hex digest. The object must not be
  // updated afterwards.
  std::string hex();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::string& path);

}  // namespace kgst
