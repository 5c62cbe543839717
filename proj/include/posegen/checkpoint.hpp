#pragma once

#include <Eigen/Core>
#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

namespace posegen::io {

/// Container of named float64 arrays, written as:
///   bytes 0..7   little-endian uint64 header length H
///   bytes 8..8+H UTF-8 JSON header {format, version, meta, tensors[]}
///   remainder    row-major little-endian float64 payload
/// Each tensors[] entry records name, rows, cols, dtype and byte offset into
/// the payload. The same container backs tokenizer and model checkpoints.
struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Eigen::MatrixXd>> tensors;

  void add(const std::string& name, const Eigen::MatrixXd& m) { tensors.emplace_back(name, m); }
  bool has(const std::string& name) const;
  const Eigen::MatrixXd& get(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace posegen::io
