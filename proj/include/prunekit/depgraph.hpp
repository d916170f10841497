#pragma once

#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "prunekit/dims.hpp"
#include "prunekit/error.hpp"
#include "prunekit/model.hpp"
#include "prunekit/shapes.hpp"

namespace prunekit {

// Contiguous run of root channels [lo, hi) landing at root_ch + delta in the
// member's index space. Concat is why delta can be nonzero.
struct Segment {
  int64_t lo = 0;
  int64_t hi = 0;
  int64_t delta = 0;
};

struct IndexMap {
  std::vector<Segment> segs;  // sorted by lo, disjoint

  static IndexMap identity(int64_t extent) {
    IndexMap m;
    m.segs.push_back(Segment{0, extent, 0});
    return m;
  }

  // Member channel for a root channel, or -1 when the root channel does not
  // reach this member (partial coverage through Concat branches).
  int64_t apply(int64_t root_ch) const {
    for (const Segment& s : segs) {
      if (root_ch >= s.lo && root_ch < s.hi) return root_ch + s.delta;
    }
    return -1;
  }

  int64_t domain_size() const {
    int64_t n = 0;
    for (const Segment& s : segs) n += s.hi - s.lo;
    return n;
  }

  bool identity_over(int64_t extent) const {
    return segs.size() == 1 && segs[0].lo == 0 && segs[0].hi == extent && segs[0].delta == 0;
  }
};

struct GroupMember {
  DimKey key;
  int64_t extent = 0;  // full channel extent of the member axis
  IndexMap map;        // root index space -> member index space
};

struct PruningGroup {
  DimKey root;
  int64_t extent = 0;  // root extent; removal indices live in this space
  std::vector<GroupMember> members;

  std::string id() const { return root.str(); }

  const GroupMember* member(const DimKey& key) const {
    for (const GroupMember& m : members) {
      if (m.key == key) return &m;
    }
    return nullptr;
  }

  // Distinct layer ids over all members, in member order.
  std::vector<std::string> member_layers() const {
    std::vector<std::string> out;
    for (const GroupMember& m : members) {
      bool seen = false;
      for (const std::string& l : out) seen = seen || l == m.key.layer;
      if (!seen) out.push_back(m.key.layer);
    }
    return out;
  }
};

struct PrunableAxis {
  DimKey key;
  int64_t extent = 0;
  int64_t flat_offset = 0;  // first channel's index in the flat universe
};

struct CouplingEdge {
  DimKey from;
  DimKey to;
  bool intra = false;  // tied input/output axis of one layer
  int64_t delta = 0;   // channel k of `from` couples to k + delta of `to`
};

// Channel-level view of "pruning here forces pruning there". Every channel of
// every axis is a node in a union-find; coupled channels share a class.
struct DepGraph {
  const ModelGraph* model = nullptr;
  ShapeMap shapes;
  std::vector<PrunableAxis> axes;  // topo order of layers, In before Out
  std::map<DimKey, int> axis_index;
  std::vector<CouplingEdge> edges;
  std::vector<int64_t> class_of;     // flat channel -> class representative
  std::set<int64_t> excluded;        // classes touching the model interface
  std::vector<std::string> topo;     // layer order used for axis ordering

  int64_t flat(int axis, int64_t ch) const { return axes[axis].flat_offset + ch; }

  int64_t flat(const DimKey& key, int64_t ch) const {
    auto it = axis_index.find(key);
    check(it != axis_index.end(), "no channel axis " + key.str());
    return flat(it->second, ch);
  }

  int64_t extent_of(const DimKey& key) const {
    auto it = axis_index.find(key);
    check(it != axis_index.end(), "no channel axis " + key.str());
    return axes[it->second].extent;
  }

  bool class_excluded(int64_t rep) const { return excluded.count(rep) != 0; }
};

namespace detail {

inline int64_t uf_find(std::vector<int64_t>& parent, int64_t x) {
  while (parent[x] != x) {
    parent[x] = parent[parent[x]];
    x = parent[x];
  }
  return x;
}

inline void uf_union(std::vector<int64_t>& parent, int64_t a, int64_t b) {
  a = uf_find(parent, a);
  b = uf_find(parent, b);
  if (a == b) return;
  // smaller representative wins, keeps classes deterministic
  if (a < b) parent[b] = a;
  else parent[a] = b;
}

}  // namespace detail

inline DepGraph build_depgraph(const ModelGraph& m) {
  DepGraph dg;
  dg.model = &m;
  dg.shapes = infer_shapes(m);
  dg.topo = m.topo_order();

  for (const std::string& id : dg.topo) {
    const NodeSpec& n = m.node(id);
    if (n.op != OpKind::Input) {
      PrunableAxis ax{DimKey{id, Side::In}, in_channels(m, dg.shapes, id), 0};
      dg.axis_index[ax.key] = static_cast<int>(dg.axes.size());
      dg.axes.push_back(ax);
    }
    if (n.op != OpKind::Output) {
      PrunableAxis ax{DimKey{id, Side::Out}, out_channels(m, dg.shapes, id), 0};
      dg.axis_index[ax.key] = static_cast<int>(dg.axes.size());
      dg.axes.push_back(ax);
    }
  }
  int64_t total = 0;
  for (PrunableAxis& ax : dg.axes) {
    ax.flat_offset = total;
    total += ax.extent;
  }

  std::vector<int64_t> parent(static_cast<size_t>(total));
  std::iota(parent.begin(), parent.end(), 0);

  for (const std::string& id : dg.topo) {
    const NodeSpec& n = m.node(id);
    // intra-layer: tied input/output channel axis
    if (channels_tied(n.op)) {
      const DimKey in_key{id, Side::In}, out_key{id, Side::Out};
      const int64_t extent = dg.extent_of(in_key);
      check(extent == dg.extent_of(out_key),
            "tied axes of '" + id + "' disagree on extent");
      for (int64_t k = 0; k < extent; ++k) {
        detail::uf_union(parent, dg.flat(in_key, k), dg.flat(out_key, k));
      }
      dg.edges.push_back(CouplingEdge{in_key, out_key, true, 0});
    }
    // inter-layer: producer output channels feed consumer input channels
    int64_t offset = 0;
    for (const std::string& src : n.inputs) {
      const DimKey prod{src, Side::Out};
      const DimKey cons{id, Side::In};
      const int64_t src_extent = dg.extent_of(prod);
      const int64_t delta = n.op == OpKind::Concat ? offset : 0;
      for (int64_t k = 0; k < src_extent; ++k) {
        detail::uf_union(parent, dg.flat(prod, k), dg.flat(cons, k + delta));
      }
      dg.edges.push_back(CouplingEdge{prod, cons, false, delta});
      offset += src_extent;
    }
  }

  dg.class_of.resize(parent.size());
  for (int64_t i = 0; i < total; ++i) dg.class_of[i] = detail::uf_find(parent, i);

  // Classes touching the model interface are off limits: the input axis and
  // every head axis keep their extents.
  for (const NodeSpec& n : m.nodes) {
    if (n.op == OpKind::Input) {
      const DimKey key(n.id, Side::Out);
      for (int64_t k = 0; k < dg.extent_of(key); ++k) {
        dg.excluded.insert(dg.class_of[dg.flat(key, k)]);
      }
    } else if (n.op == OpKind::Output) {
      const DimKey key(n.id, Side::In);
      for (int64_t k = 0; k < dg.extent_of(key); ++k) {
        dg.excluded.insert(dg.class_of[dg.flat(key, k)]);
      }
    }
  }
  return dg;
}

// Transitive closure of couplings from one target axis, expressed as member
// axes with affine maps out of the target's index space.
inline PruningGroup collect_group(const DepGraph& dg, const DimKey& target) {
  auto it = dg.axis_index.find(target);
  check(it != dg.axis_index.end(), "no channel axis " + target.str());
  const PrunableAxis& ax = dg.axes[it->second];

  std::map<int64_t, int64_t> root_ch_of_class;
  for (int64_t k = 0; k < ax.extent; ++k) {
    const int64_t cls = dg.class_of[dg.flat(it->second, k)];
    check(!dg.class_excluded(cls),
          "target " + target.str() + " is excluded from pruning (coupled to the model interface)");
    const bool fresh = root_ch_of_class.emplace(cls, k).second;
    check(fresh, "unsupported coupling topology: channels of " + target.str() +
                     " interleave within one coupling class");
  }

  PruningGroup g;
  g.root = target;
  g.extent = ax.extent;

  for (size_t a = 0; a < dg.axes.size(); ++a) {
    const PrunableAxis& cand = dg.axes[a];
    std::vector<int64_t> to_member;  // root channel -> member channel or -1
    bool any = false;
    for (int64_t c = 0; c < cand.extent; ++c) {
      const auto hit = root_ch_of_class.find(dg.class_of[dg.flat(static_cast<int>(a), c)]);
      if (hit == root_ch_of_class.end()) continue;
      if (!any) {
        to_member.assign(static_cast<size_t>(ax.extent), -1);
        any = true;
      }
      check(to_member[hit->second] == -1,
            "unsupported coupling topology: " + cand.key.str() +
                " couples twice to one channel of " + target.str());
      to_member[hit->second] = c;
    }
    if (!any) continue;

    GroupMember mem;
    mem.key = cand.key;
    mem.extent = cand.extent;
    for (int64_t r = 0; r < ax.extent; ++r) {
      if (to_member[r] == -1) continue;
      const int64_t delta = to_member[r] - r;
      if (!mem.map.segs.empty() && mem.map.segs.back().hi == r &&
          mem.map.segs.back().delta == delta) {
        mem.map.segs.back().hi = r + 1;
      } else {
        mem.map.segs.push_back(Segment{r, r + 1, delta});
      }
    }
    g.members.push_back(std::move(mem));
  }

  const GroupMember* self = g.member(target);
  check(self != nullptr && self->map.identity_over(ax.extent),
        "group root lost identity mapping (graph bug)");
  return g;
}

// One group per coupling class reachable from a non-excluded axis. Roots are
// picked greedily in axis order; an axis whose channel classes were already
// claimed, or that touches an excluded class, cannot root a group.
inline std::vector<PruningGroup> enumerate_groups(const DepGraph& dg) {
  std::vector<PruningGroup> out;
  std::set<int64_t> claimed;
  for (size_t a = 0; a < dg.axes.size(); ++a) {
    const PrunableAxis& ax = dg.axes[a];
    bool fresh = true, excl = false, distinct = true;
    std::set<int64_t> classes;
    for (int64_t k = 0; k < ax.extent; ++k) {
      const int64_t cls = dg.class_of[dg.flat(static_cast<int>(a), k)];
      if (claimed.count(cls)) fresh = false;
      if (dg.class_excluded(cls)) excl = true;
      if (!classes.insert(cls).second) distinct = false;
    }
    if (!fresh || excl || !distinct) continue;
    out.push_back(collect_group(dg, ax.key));
    claimed.insert(classes.begin(), classes.end());
  }
  // every non-excluded class must now be owned by exactly one group
  for (size_t a = 0; a < dg.axes.size(); ++a) {
    for (int64_t k = 0; k < dg.axes[a].extent; ++k) {
      const int64_t cls = dg.class_of[dg.flat(static_cast<int>(a), k)];
      check(dg.class_excluded(cls) || claimed.count(cls) != 0,
            "unsupported coupling topology: channel class at " + dg.axes[a].key.str() +
                " has no viable group root");
    }
  }
  return out;
}

}  // namespace prunekit
