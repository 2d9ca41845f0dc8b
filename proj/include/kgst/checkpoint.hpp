#pragma once

#include <json.hpp>

#include <string>
#include <vector>

#include "kgst/common.hpp"

namespace kgst {

inline constexpr int kCheckpointFormatVersion = 1;

// On-disk container shared by KGE, LM and trainer checkpoints: one
// single-line JSON header terminated by '\n', followed by the raw payload of
// every tensor listed in header["tensors"], row-major float64
// little-endian, in listing order. Vectors are stored as n x 1.
struct NamedTensor {
  std::string name;
  Matrix data;
};

struct Checkpoint {
  nlohmann::ordered_json header;
  std::vector<NamedTensor> tensors;

  const Matrix& tensor(const std::string& name) const;
};

// `header` must not already contain "tensors"; the shape table and
// format_version are filled in here. Writing is byte-deterministic.
void write_checkpoint(const std::string& path, nlohmann::ordered_json header,
                      const std::vector<NamedTensor>& tensors);

// Validates format_version and payload length; `expected_kind` (when
// non-empty) is matched against header["kind"].
Checkpoint read_checkpoint(const std::string& path,
                           const std::string& expected_kind = "");

}  // namespace kgst
