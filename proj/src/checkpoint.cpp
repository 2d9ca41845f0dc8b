#include "kgst/checkpoint.hpp"

#include <bit>
#include <fstream>

namespace kgst {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are little-endian");

const Matrix& Checkpoint::tensor(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.data;
  }
  throw LookupError("checkpoint tensor not found: " + name);
}

void write_checkpoint(const std::string& path, nlohmann::ordered_json header,
                      const std::vector<NamedTensor>& tensors) {
  if (header.contains("tensors")) {
    throw ContractError("checkpoint header already has a tensors field");
  }
  header["format_version"] = kCheckpointFormatVersion;
  auto shapes = nlohmann::ordered_json::array();
  for (const auto& t : tensors) {
    shapes.push_back({{"name", t.name},
                      {"rows", t.data.rows()},
                      {"cols", t.data.cols()}});
  }
  header["tensors"] = shapes;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out << header.dump() << '\n';
  for (const auto& t : tensors) {
    for (Index i = 0; i < t.data.rows(); ++i) {
      for (Index j = 0; j < t.data.cols(); ++j) {
        const double v = t.data(i, j);
        out.write(reinterpret_cast<const char*>(&v), sizeof(double));
      }
    }
  }
  if (!out) throw IoError("checkpoint write failed: " + path);
}

Checkpoint read_checkpoint(const std::string& path,
                           const std::string& expected_kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::string header_line;
  if (!std::getline(in, header_line)) {
    throw ParseError("checkpoint missing header line: " + path);
  }
  Checkpoint cp;
  try {
    cp.header = nlohmann::ordered_json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint header is not valid JSON: " + path + ": " +
                     e.what());
  }
  if (!cp.header.contains("format_version") ||
      cp.header["format_version"].get<int>() != kCheckpointFormatVersion) {
    throw ConfigError("checkpoint format_version mismatch in " + path);
  }
  if (!expected_kind.empty()) {
    const std::string kind = cp.header.value("kind", "");
    if (kind != expected_kind) {
      throw ConfigError("checkpoint kind mismatch in " + path + ": expected " +
                        expected_kind + ", got " + kind);
    }
  }
  for (const auto& shape : cp.header.at("tensors")) {
    NamedTensor t;
    t.name = shape.at("name").get<std::string>();
    const Index rows = shape.at("rows").get<Index>();
    const Index cols = shape.at("cols").get<Index>();
    t.data.resize(rows, cols);
    for (Index i = 0; i < rows; ++i) {
      for (Index j = 0; j < cols; ++j) {
        double v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof(double));
        t.data(i, j) = v;
      }
    }
    if (!in) {
      throw ConfigError("checkpoint payload truncated for tensor " + t.name +
                        " in " + path);
    }
    cp.tensors.push_back(std::move(t));
  }
  // Trailing bytes mean the shape table and payload disagree.
  char extra;
  if (in.read(&extra, 1)) {
    throw ConfigError("checkpoint payload longer than declared in " + path);
  }
  return cp;
}

}  // namespace kgst
