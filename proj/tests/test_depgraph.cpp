#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

using namespace prunekit;

namespace {

const GroupMember& member_of(const PruningGroup& g, const std::string& key) {
  const GroupMember* m = g.member(parse_dimkey(key));
  REQUIRE(m != nullptr);
  return *m;
}

void check_closure_fixpoint(const ModelGraph& m, const PruningGroup& g) {
  for (int64_t ch = 0; ch < g.extent; ++ch) {
    CAPTURE(g.id(), ch);
    CHECK(oracles::closure(m, g.root, ch) == oracles::group_slice(g, ch));
  }
}

}  // namespace

TEST_CASE("index map mechanics") {
  IndexMap id = IndexMap::identity(8);
  CHECK(id.apply(0) == 0);
  CHECK(id.apply(7) == 7);
  CHECK(id.apply(8) == -1);
  CHECK(id.domain_size() == 8);
  CHECK(id.identity_over(8));
  CHECK_FALSE(id.identity_over(9));

  IndexMap shifted;
  shifted.segs.push_back(Segment{0, 3, 4});
  CHECK(shifted.apply(0) == 4);
  CHECK(shifted.apply(2) == 6);
  CHECK(shifted.apply(3) == -1);
  CHECK(shifted.domain_size() == 3);
  CHECK_FALSE(shifted.identity_over(3));
}

TEST_CASE("chain couples producer outputs to consumer inputs") {
  const ModelGraph m = fixtures::chain();
  const DepGraph dg = build_depgraph(m);

  const std::vector<PruningGroup> groups = enumerate_groups(dg);
  REQUIRE(groups.size() == 1);
  const PruningGroup& g = groups[0];
  CHECK(g.root == DimKey("conv1", Side::Out));
  CHECK(g.extent == 8);
  REQUIRE(g.members.size() == 2);
  CHECK(member_of(g, "conv1:out").map.identity_over(8));
  CHECK(member_of(g, "conv2:in").map.identity_over(8));
  check_closure_fixpoint(m, g);
}

TEST_CASE("interface axes are excluded") {
  const ModelGraph m = fixtures::chain();
  const DepGraph dg = build_depgraph(m);

  CHECK_THROWS_WITH(collect_group(dg, DimKey("conv1", Side::In)),
                    Catch::Matchers::ContainsSubstring("coupled to the model interface"));
  CHECK_THROWS_WITH(collect_group(dg, DimKey("conv2", Side::Out)),
                    Catch::Matchers::ContainsSubstring("coupled to the model interface"));
  CHECK_THROWS_WITH(collect_group(dg, DimKey("input", Side::Out)),
                    Catch::Matchers::ContainsSubstring("coupled to the model interface"));
  CHECK_THROWS_WITH(collect_group(dg, DimKey("missing", Side::Out)),
                    Catch::Matchers::ContainsSubstring("no channel axis"));
}

TEST_CASE("add folds both branches into one group") {
  const ModelGraph m = fixtures::fig2();
  const DepGraph dg = build_depgraph(m);
  const std::vector<PruningGroup> groups = enumerate_groups(dg);
  REQUIRE(groups.size() == 1);
  const PruningGroup& g = groups[0];
  CHECK(g.extent == 8);
  // l4 participates with both sides: its input through l3, its output
  // through the add
  REQUIRE(g.members.size() == 14);
  CHECK(g.member(DimKey("l4", Side::In)) != nullptr);
  CHECK(g.member(DimKey("l4", Side::Out)) != nullptr);
  CHECK(g.member(DimKey("l5", Side::In)) != nullptr);
  CHECK(g.member(DimKey("l8", Side::In)) != nullptr);
  CHECK(g.member(DimKey("l8", Side::Out)) == nullptr);
  for (const GroupMember& mem : g.members) CHECK(mem.map.identity_over(g.extent));
  check_closure_fixpoint(m, g);
}

TEST_CASE("residual skip joins the producer group") {
  const ModelGraph m = fixtures::residual();
  const DepGraph dg = build_depgraph(m);
  const std::vector<PruningGroup> groups = enumerate_groups(dg);
  REQUIRE(groups.size() == 1);
  const PruningGroup& g = groups[0];
  CHECK(g.root == DimKey("c0", Side::Out));
  REQUIRE(g.members.size() == 6);
  CHECK(g.member(DimKey("c1", Side::Out)) != nullptr);
  CHECK(g.member(DimKey("add", Side::Out)) != nullptr);
  CHECK(g.member(DimKey("c2", Side::In)) != nullptr);
  check_closure_fixpoint(m, g);
}

TEST_CASE("depthwise ties input to output") {
  const ModelGraph m = fixtures::depthwise_mid();
  const DepGraph dg = build_depgraph(m);
  const std::vector<PruningGroup> groups = enumerate_groups(dg);
  REQUIRE(groups.size() == 1);
  const PruningGroup& g = groups[0];
  REQUIRE(g.members.size() == 4);
  CHECK(g.member(DimKey("dw", Side::In)) != nullptr);
  CHECK(g.member(DimKey("dw", Side::Out)) != nullptr);
  check_closure_fixpoint(m, g);
}

TEST_CASE("parallel consumers share the producer's group") {
  const ModelGraph m = fixtures::parallel();
  const DepGraph dg = build_depgraph(m);
  const std::vector<PruningGroup> groups = enumerate_groups(dg);
  REQUIRE(groups.size() == 1);
  const PruningGroup& g = groups[0];
  REQUIRE(g.members.size() == 3);
  CHECK(g.member(DimKey("c2", Side::In)) != nullptr);
  CHECK(g.member(DimKey("c3", Side::In)) != nullptr);
  check_closure_fixpoint(m, g);
}

TEST_CASE("concat offsets the second branch") {
  const ModelGraph m = fixtures::concat_mix();
  const DepGraph dg = build_depgraph(m);
  const std::vector<PruningGroup> groups = enumerate_groups(dg);
  REQUIRE(groups.size() == 2);

  const PruningGroup& ga = groups[0];
  CHECK(ga.root == DimKey("a", Side::Out));
  CHECK(ga.extent == 4);
  REQUIRE(ga.members.size() == 4);
  {
    const GroupMember& cat_in = member_of(ga, "cat:in");
    CHECK(cat_in.extent == 7);
    REQUIRE(cat_in.map.segs.size() == 1);
    CHECK(cat_in.map.segs[0].lo == 0);
    CHECK(cat_in.map.segs[0].hi == 4);
    CHECK(cat_in.map.segs[0].delta == 0);
    CHECK(member_of(ga, "mix:in").map.apply(3) == 3);
  }
  check_closure_fixpoint(m, ga);

  const PruningGroup& gb = groups[1];
  CHECK(gb.root == DimKey("bb", Side::Out));
  CHECK(gb.extent == 3);
  {
    const GroupMember& cat_in = member_of(gb, "cat:in");
    REQUIRE(cat_in.map.segs.size() == 1);
    CHECK(cat_in.map.segs[0].lo == 0);
    CHECK(cat_in.map.segs[0].hi == 3);
    CHECK(cat_in.map.segs[0].delta == 4);
    CHECK(member_of(gb, "mix:in").map.apply(0) == 4);
    CHECK(member_of(gb, "mix:in").map.apply(2) == 6);
    CHECK(member_of(gb, "mix:in").map.apply(3) == -1);
  }
  check_closure_fixpoint(m, gb);
}

TEST_CASE("concat of the same producer twice is unsupported") {
  fixtures::Builder b;
  b.node("input", OpKind::Input, {});
  b.m.input_shape = TensorShape{{1, 3, 8, 8}};
  b.conv("x", "input", 3, 4, 1);
  b.node("cat", OpKind::Concat, {"x", "x"});
  b.conv("mix", "cat", 8, 4, 1);
  b.node("out", OpKind::Output, {"mix"});
  validate(b.m);
  const DepGraph dg = build_depgraph(b.m);
  CHECK_THROWS_WITH(collect_group(dg, DimKey("x", Side::Out)),
                    Catch::Matchers::ContainsSubstring("unsupported coupling topology"));
  CHECK_THROWS_WITH(enumerate_groups(dg),
                    Catch::Matchers::ContainsSubstring("unsupported coupling topology"));
}

TEST_CASE("axis bookkeeping matches the shape map") {
  const ModelGraph m = fixtures::concat_mix();
  const DepGraph dg = build_depgraph(m);
  CHECK(dg.axes.size() == dg.axis_index.size());
  CHECK(dg.extent_of(DimKey("cat", Side::In)) == 7);
  CHECK(dg.extent_of(DimKey("cat", Side::Out)) == 7);
  CHECK(dg.extent_of(DimKey("a", Side::Out)) == 4);
  CHECK(dg.extent_of(DimKey("mix", Side::In)) == 7);
  // flat offsets tile the axis extents without gaps
  int64_t expect = 0;
  for (const PrunableAxis& ax : dg.axes) {
    CHECK(ax.flat_offset == expect);
    expect += ax.extent;
  }
}

TEST_CASE("groups partition the non-excluded axes of toy models") {
  for (uint64_t seed : {1, 2, 3, 4, 5}) {
    ToySpec spec;
    spec.seed = seed;
    spec.width = 4 + static_cast<int64_t>(seed % 5);
    spec.in_size = 8;
    spec.blocks = {BlockKind::Plain, BlockKind::Residual, BlockKind::Concat,
                   BlockKind::Depthwise, BlockKind::DownUp};
    const ModelGraph m = gen_toy_model(spec);
    const DepGraph dg = build_depgraph(m);
    const std::vector<PruningGroup> groups = enumerate_groups(dg);
    CHECK(groups.size() >= 5);

    // every group is a closure fixpoint, and no (axis, channel) pair is
    // claimed twice; axes crossed by a concat may appear in several groups
    // with disjoint channel ranges
    std::set<std::pair<DimKey, int64_t>> claimed;
    for (const PruningGroup& g : groups) {
      check_closure_fixpoint(m, g);
      for (const GroupMember& mem : g.members) {
        for (int64_t ch = 0; ch < g.extent; ++ch) {
          const int64_t c = mem.map.apply(ch);
          if (c >= 0) CHECK(claimed.insert({mem.key, c}).second);
        }
      }
    }
  }
}

TEST_CASE("dot export names the members") {
  const ModelGraph m = fixtures::concat_mix();
  const DepGraph dg = build_depgraph(m);
  const std::string whole = export_dot(dg);
  CHECK(whole.find("digraph") != std::string::npos);
  CHECK(whole.find("a:out") != std::string::npos);
  CHECK(whole.find("+4") != std::string::npos);

  const PruningGroup g = collect_group(dg, DimKey("a", Side::Out));
  const std::string one = export_dot(m, g, gate_set(m, g));
  CHECK(one.find("doublecircle") != std::string::npos);
  CHECK(one.find("mix") != std::string::npos);
}
