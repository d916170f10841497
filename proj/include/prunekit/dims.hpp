#pragma once

#include <string>
#include <tuple>

#include "prunekit/error.hpp"

namespace prunekit {

// Which channel axis of a layer: its input (-) or output (+) channels.
enum class Side { In, Out };

inline const char* side_name(Side s) { return s == Side::In ? "in" : "out"; }

inline Side parse_side(const std::string& s) {
  if (s == "in") return Side::In;
  if (s == "out") return Side::Out;
  fail("unknown side '" + s + "' (expected 'in' or 'out')");
}

// Addresses one channel axis of one layer.
struct DimKey {
  std::string layer;
  Side side = Side::Out;

  DimKey() = default;
  DimKey(std::string l, Side s) : layer(std::move(l)), side(s) {}

  bool operator<(const DimKey& o) const {
    return std::tie(layer, side) < std::tie(o.layer, o.side);
  }
  bool operator==(const DimKey& o) const { return layer == o.layer && side == o.side; }

  std::string str() const { return layer + ":" + side_name(side); }
};

inline DimKey parse_dimkey(const std::string& s) {
  auto pos = s.rfind(':');
  check(pos != std::string::npos, "expected 'layer:side', got '" + s + "'");
  return DimKey(s.substr(0, pos), parse_side(s.substr(pos + 1)));
}

}  // namespace prunekit
