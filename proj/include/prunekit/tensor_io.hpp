#pragma once

#include <cstring>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "prunekit/model_io.hpp"
#include "prunekit/tensor.hpp"

namespace prunekit {

// Batch container: a directory with tensor.json (shape header) and
// tensor.bin (little-endian f32, NCHW).
inline constexpr const char* kTensorFormat = "prunekit-tensor/1";

inline void save_batch(const Tensor& t, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) fail("cannot create batch directory '" + dir.string() + "'");
  nlohmann::json j;
  j["format"] = kTensorFormat;
  j["shape"] = t.shape.dims;
  std::string s = j.dump(2);
  s.push_back('\n');
  detail::write_file_atomic(dir / "tensor.json", s.data(), s.size());
  detail::write_file_atomic(dir / "tensor.bin", t.data.data(), t.data.size() * 4);
}

inline Tensor load_batch(const std::filesystem::path& dir) {
  auto jbuf = detail::read_file(dir / "tensor.json");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(jbuf.begin(), jbuf.end());
  } catch (const std::exception& e) {
    fail("cannot parse '" + (dir / "tensor.json").string() + "': " + e.what());
  }
  if (!j.contains("format") || j.at("format").get<std::string>() != kTensorFormat)
    fail("unsupported tensor format (expected " + std::string(kTensorFormat) + ")");
  TensorShape shape(j.at("shape").get<std::vector<int64_t>>());
  shape.validate("batch tensor");
  auto blob = detail::read_file(dir / "tensor.bin");
  if (static_cast<int64_t>(blob.size()) != shape.elems() * 4)
    fail("tensor.bin length mismatch: shape " + shape.str() + " needs " +
         std::to_string(shape.elems() * 4) + " bytes, file has " + std::to_string(blob.size()));
  std::vector<float> data(static_cast<size_t>(shape.elems()));
  std::memcpy(data.data(), blob.data(), blob.size());
  return Tensor(shape, std::move(data));
}

}  // namespace prunekit
