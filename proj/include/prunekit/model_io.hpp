#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "prunekit/hash.hpp"
#include "prunekit/model.hpp"
#include "prunekit/shapes.hpp"

namespace prunekit {

// Model container: a directory holding graph.json (nodes, attrs, param
// shapes and byte offsets, edges, declared input shape) and weights.bin
// (little-endian f32, concatenated in declared offset order, no padding).
inline constexpr const char* kModelFormat = "prunekit-model/1";

namespace detail {

inline nlohmann::json attrs_to_json(const NodeSpec& n) {
  nlohmann::json j = nlohmann::json::object();
  switch (n.op) {
    case OpKind::Conv2d:
    case OpKind::DepthwiseConv2d:
      j["stride"] = n.attrs.stride;
      j["padding"] = n.attrs.padding;
      break;
    case OpKind::MaxPool:
    case OpKind::AvgPool:
      j["kernel"] = n.attrs.kernel;
      j["stride"] = n.attrs.stride;
      j["padding"] = n.attrs.padding;
      break;
    case OpKind::UpsampleNearest:
      j["factor"] = n.attrs.factor;
      break;
    case OpKind::Concat:
      j["axis"] = n.attrs.axis;
      break;
    case OpKind::BatchNorm:
      j["eps"] = n.attrs.eps;
      break;
    default:
      break;
  }
  return j;
}

inline Attrs attrs_from_json(const nlohmann::json& j) {
  Attrs a;
  if (j.contains("stride")) a.stride = j.at("stride").get<int>();
  if (j.contains("padding")) a.padding = j.at("padding").get<int>();
  if (j.contains("kernel")) a.kernel = j.at("kernel").get<int>();
  if (j.contains("factor")) a.factor = j.at("factor").get<int>();
  if (j.contains("axis")) a.axis = j.at("axis").get<int>();
  if (j.contains("eps")) a.eps = j.at("eps").get<double>();
  return a;
}

inline void write_file_atomic(const std::filesystem::path& path, const void* data, size_t len) {
  namespace fs = std::filesystem;
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail("cannot open '" + tmp.string() + "' for writing");
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
    if (!out) fail("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) fail("cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

inline std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open '" + path.string() + "'");
  in.seekg(0, std::ios::end);
  auto len = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<char> buf(static_cast<size_t>(len));
  in.read(buf.data(), len);
  if (!in) fail("read failed for '" + path.string() + "'");
  return buf;
}

}  // namespace detail

inline nlohmann::json graph_json(const ModelGraph& m) {
  nlohmann::json j;
  j["format"] = kModelFormat;
  j["input_shape"] = m.input_shape.dims;
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : m.nodes) {
    nlohmann::json nj;
    nj["id"] = n.id;
    nj["op"] = op_name(n.op);
    nj["inputs"] = n.inputs;
    nj["attrs"] = detail::attrs_to_json(n);
    nj["params"] = n.params;
    nodes.push_back(nj);
  }
  j["nodes"] = nodes;
  nlohmann::json plist = nlohmann::json::array();
  int64_t offset = 0;
  for (const auto& name : m.param_order) {
    const Tensor& t = m.param(name);
    nlohmann::json pj;
    pj["name"] = name;
    pj["shape"] = t.shape.dims;
    pj["offset"] = offset;
    plist.push_back(pj);
    offset += t.elems() * 4;
  }
  j["params"] = plist;
  return j;
}

inline std::vector<char> weights_blob(const ModelGraph& m) {
  size_t total = 0;
  for (const auto& name : m.param_order) total += m.param(name).data.size() * 4;
  std::vector<char> blob(total);
  size_t pos = 0;
  for (const auto& name : m.param_order) {
    const Tensor& t = m.param(name);
    std::memcpy(blob.data() + pos, t.data.data(), t.data.size() * 4);
    pos += t.data.size() * 4;
  }
  return blob;
}

// Content hash of graph plus weights; hex string.
inline std::string model_hash(const ModelGraph& m) {
  uint64_t h = fnv1a64(graph_json(m).dump());
  auto blob = weights_blob(m);
  h = fnv1a64(blob.data(), blob.size(), h);
  return hex64(h);
}

// Hash of graph structure and shapes only (weights excluded).
inline std::string topology_hash(const ModelGraph& m) {
  return hex64(fnv1a64(graph_json(m).dump()));
}

inline std::string weights_hash(const ModelGraph& m) {
  auto blob = weights_blob(m);
  return hex64(fnv1a64(blob.data(), blob.size()));
}

inline void save_model(const ModelGraph& m, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) fail("cannot create model directory '" + dir.string() + "'");
  std::string g = graph_json(m).dump(2);
  g.push_back('\n');
  detail::write_file_atomic(dir / "graph.json", g.data(), g.size());
  auto blob = weights_blob(m);
  detail::write_file_atomic(dir / "weights.bin", blob.data(), blob.size());
}

inline ModelGraph load_model(const std::filesystem::path& dir) {
  auto gbuf = detail::read_file(dir / "graph.json");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(gbuf.begin(), gbuf.end());
  } catch (const std::exception& e) {
    fail("cannot parse '" + (dir / "graph.json").string() + "': " + e.what());
  }
  if (!j.contains("format") || j.at("format").get<std::string>() != kModelFormat)
    fail("unsupported model format (expected " + std::string(kModelFormat) + ")");

  ModelGraph m;
  m.input_shape = TensorShape(j.at("input_shape").get<std::vector<int64_t>>());
  for (const auto& nj : j.at("nodes")) {
    NodeSpec n;
    n.id = nj.at("id").get<std::string>();
    n.op = parse_op(nj.at("op").get<std::string>());
    n.inputs = nj.at("inputs").get<std::vector<std::string>>();
    n.attrs = detail::attrs_from_json(nj.at("attrs"));
    if (nj.contains("params"))
      n.params = nj.at("params").get<std::map<std::string, std::string>>();
    m.nodes.push_back(std::move(n));
  }

  auto blob = detail::read_file(dir / "weights.bin");
  int64_t expected_offset = 0;
  for (const auto& pj : j.at("params")) {
    std::string name = pj.at("name").get<std::string>();
    TensorShape shape(pj.at("shape").get<std::vector<int64_t>>());
    shape.validate("param '" + name + "'");
    int64_t offset = pj.at("offset").get<int64_t>();
    if (offset != expected_offset)
      fail("param '" + name + "': offset " + std::to_string(offset) + " leaves a gap or overlap");
    int64_t bytes = shape.elems() * 4;
    if (offset + bytes > static_cast<int64_t>(blob.size()))
      fail("blob length mismatch: param '" + name + "' needs bytes up to " +
           std::to_string(offset + bytes) + ", weights.bin has " + std::to_string(blob.size()));
    std::vector<float> data(static_cast<size_t>(shape.elems()));
    std::memcpy(data.data(), blob.data() + offset, static_cast<size_t>(bytes));
    if (m.params.count(name)) fail("duplicate param '" + name + "'");
    m.params.emplace(name, Tensor(shape, std::move(data)));
    m.param_order.push_back(name);
    expected_offset = offset + bytes;
  }
  if (expected_offset != static_cast<int64_t>(blob.size()))
    fail("blob length mismatch: declared params cover " + std::to_string(expected_offset) +
         " bytes, weights.bin has " + std::to_string(blob.size()));

  validate(m);
  return m;
}

}  // namespace prunekit
