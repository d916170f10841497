#pragma once

#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "prunekit/depgraph.hpp"
#include "prunekit/model.hpp"

namespace prunekit {

namespace detail {

inline std::string dot_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace detail

// Axis-level view: one node per (layer, side) channel axis, solid edges for
// inter-layer couplings (labeled with the concat offset when nonzero),
// dashed edges for tied axes.
inline std::string export_dot(const DepGraph& dg) {
  std::ostringstream os;
  os << "digraph depgraph {\n";
  os << "  rankdir=TB;\n";
  os << "  node [shape=box, fontname=\"monospace\"];\n";
  for (const PrunableAxis& ax : dg.axes) {
    os << "  " << detail::dot_quote(ax.key.str()) << " [label="
       << detail::dot_quote(ax.key.str() + " (" + std::to_string(ax.extent) + ")") << "];\n";
  }
  for (const CouplingEdge& e : dg.edges) {
    os << "  " << detail::dot_quote(e.from.str()) << " -> " << detail::dot_quote(e.to.str());
    if (e.intra) {
      os << " [style=dashed, dir=none]";
    } else if (e.delta != 0) {
      os << " [label=\"+" << e.delta << "\"]";
    }
    os << ";\n";
  }
  os << "}\n";
  return os.str();
}

// Layer-level view of one group: the computational graph with group members
// filled and gate layers double-circled. Labels carry the member sides.
inline std::string export_dot(const ModelGraph& m, const PruningGroup& g,
                              const std::vector<std::string>& gates) {
  std::set<std::string> gate_set(gates.begin(), gates.end());
  std::ostringstream os;
  os << "digraph " << detail::dot_quote("group " + g.id()) << " {\n";
  os << "  rankdir=TB;\n";
  os << "  node [shape=box, fontname=\"monospace\"];\n";
  for (const std::string& id : m.topo_order()) {
    const NodeSpec& n = m.node(id);
    std::string sides;
    if (g.member(DimKey{id, Side::In}) != nullptr) sides += "-";
    if (g.member(DimKey{id, Side::Out}) != nullptr) sides += "+";
    std::string label = id + " " + op_name(n.op);
    if (!sides.empty()) label += " [" + sides + "]";
    os << "  " << detail::dot_quote(id) << " [label=" << detail::dot_quote(label);
    if (gate_set.count(id)) {
      os << ", shape=doublecircle";
    } else if (!sides.empty()) {
      os << ", style=filled, fillcolor=lightgrey";
    }
    os << "];\n";
  }
  for (const std::string& id : m.topo_order()) {
    for (const std::string& src : m.node(id).inputs) {
      os << "  " << detail::dot_quote(src) << " -> " << detail::dot_quote(id) << ";\n";
    }
  }
  os << "}\n";
  return os.str();
}

}  // namespace prunekit
