#include "posegen/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace posegen::io {

namespace {

void write_u64_le(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64_le(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw std::runtime_error("checkpoint: truncated header length");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

bool Checkpoint::has(const std::string& name) const {
  for (const auto& [n, m] : tensors)
    if (n == name) return true;
  return false;
}

const Eigen::MatrixXd& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, m] : tensors)
    if (n == name) return m;
  throw std::runtime_error("checkpoint: missing tensor '" + name + "'");
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  nlohmann::json header;
  header["format"] = "posegen-checkpoint";
  header["version"] = 1;
  header["meta"] = ckpt.meta;
  nlohmann::json tens = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, m] : ckpt.tensors) {
    tens.push_back({{"name", name},
                    {"rows", m.rows()},
                    {"cols", m.cols()},
                    {"dtype", "f64"},
                    {"offset", offset}});
    offset += static_cast<std::uint64_t>(m.size()) * sizeof(double);
  }
  header["tensors"] = std::move(tens);
  const std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  write_u64_le(out, hs.size());
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  static_assert(sizeof(double) == 8);
  for (const auto& [name, m] : ckpt.tensors) {
    // row-major payload regardless of Eigen's in-memory layout
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double v = m(r, c);
        out.write(reinterpret_cast<const char*>(&v), sizeof(double));
      }
  }
  if (!out) throw std::runtime_error("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  const std::uint64_t hlen = read_u64_le(in);
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw std::runtime_error("checkpoint: truncated header");
  nlohmann::json header = nlohmann::json::parse(hs);
  if (header.value("format", "") != "posegen-checkpoint")
    throw std::runtime_error("checkpoint: unrecognized format in " + path);

  Checkpoint ckpt;
  ckpt.meta = header.value("meta", nlohmann::json::object());
  const auto payload_start = in.tellg();
  for (const auto& t : header.at("tensors")) {
    const std::string name = t.at("name");
    const Eigen::Index rows = t.at("rows");
    const Eigen::Index cols = t.at("cols");
    if (t.at("dtype") != "f64")
      throw std::runtime_error("checkpoint: unsupported dtype for tensor '" + name + "'");
    in.seekg(payload_start + static_cast<std::streamoff>(t.at("offset").get<std::uint64_t>()));
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) {
        double v;
        in.read(reinterpret_cast<char*>(&v), sizeof(double));
        m(r, c) = v;
      }
    if (!in) throw std::runtime_error("checkpoint: truncated payload for tensor '" + name + "'");
    ckpt.tensors.emplace_back(name, std::move(m));
  }
  return ckpt;
}

}  // namespace posegen::io
