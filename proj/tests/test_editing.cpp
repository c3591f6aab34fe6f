#include <catch_amalgamated.hpp>

#include <map>
#include <random>

#include "elemedit/editing.hpp"

using namespace elemedit;
using namespace elemedit::editing;

namespace {

ElementSet make_set(const std::vector<SpatialParams>& geometry, int dim = 4) {
  ElementSet s(geometry.size(), dim);
  for (std::size_t i = 0; i < geometry.size(); ++i) {
    s[i].valid = true;
    s[i].spatial = geometry[i];
    for (int k = 0; k < dim; ++k) s[i].embedding[static_cast<std::size_t>(k)] = static_cast<float>(i * 10 + k + 1);
  }
  return s;
}

// Independent rectangle intersection: positive overlap on both axes.
bool oracle_overlap(const SpatialParams& a, const SpatialParams& b) {
  const bool x = std::abs(a.x - b.x) * 2.0 < a.w + b.w;
  const bool y = std::abs(a.y - b.y) * 2.0 < a.h + b.h;
  return x && y;
}

std::vector<int> invalid_slots(const ElementSet& s) {
  std::vector<int> out;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (!s[i].valid) out.push_back(static_cast<int>(i));
  return out;
}

}  // namespace

TEST_CASE("box collision is strict", "[editing]") {
  Box a{0.0, 0.0, 0.5, 0.5};
  REQUIRE(boxes_collide(a, {0.25, 0.25, 0.75, 0.75}));
  REQUIRE_FALSE(boxes_collide(a, {0.5, 0.0, 1.0, 0.5}));  // shared edge
  REQUIRE_FALSE(boxes_collide(a, {0.5, 0.5, 1.0, 1.0}));  // shared corner
  REQUIRE(boxes_collide(a, {0.1, 0.1, 0.2, 0.2}));        // containment
}

TEST_CASE("delete_elements", "[editing]") {
  auto s = make_set({{0.2, 0.2, 0.1, 0.1}, {0.5, 0.5, 0.1, 0.1}, {0.8, 0.8, 0.1, 0.1}});
  SECTION("empty index list is the identity") { REQUIRE(delete_elements(s, {}).set == s); }
  SECTION("delete all leaves N zero tokens") {
    std::vector<int> all{0, 1, 2};
    auto r = delete_elements(s, all).set;
    REQUIRE(r.size() == 3);
    for (const auto& e : r.elements) {
      REQUIRE_FALSE(e.valid);
      REQUIRE(e.spatial == SpatialParams{});
      for (float v : e.embedding) REQUIRE(v == 0.0f);
    }
  }
  SECTION("deleted element serializes with an all-zero payload") {
    std::vector<int> two{2};
    auto doc = elements_to_json(delete_elements(s, two).set);
    const auto& e = doc["elements"][2];
    REQUIRE(e["valid"] == false);
    REQUIRE(e["x"] == 0.0);
    REQUIRE(e["w"] == 0.0);
    for (float v : decode_floats(e["embedding"].get<std::string>())) REQUIRE(v == 0.0f);
  }
  SECTION("idempotent") {
    std::vector<int> idx{0, 2};
    auto once = delete_elements(s, idx).set;
    REQUIRE(delete_elements(once, idx).set == once);
  }
  SECTION("out of range") {
    std::vector<int> bad{3};
    REQUIRE_THROWS_AS(delete_elements(s, bad), InputError);
    std::vector<int> neg{-1};
    REQUIRE_THROWS_AS(delete_elements(s, neg), InputError);
  }
}

TEST_CASE("move_element", "[editing]") {
  auto s = make_set({{0.2, 0.2, 0.2, 0.2}, {0.5, 0.2, 0.2, 0.2}, {0.8, 0.8, 0.2, 0.2}});
  SECTION("to its own centroid with no overlapping neighbors") {
    auto r = move_element(s, 2, {0.8, 0.8});
    REQUIRE(r.set == s);
    REQUIRE(r.deleted.empty());
  }
  SECTION("overlapping 1 but not 2 deletes exactly 1") {
    auto r = move_element(s, 0, {0.45, 0.25});
    std::vector<int> expected;
    for (int j : {1, 2})
      if (oracle_overlap(r.set[0].spatial, s[static_cast<std::size_t>(j)].spatial)) expected.push_back(j);
    REQUIRE(expected == std::vector<int>{1});
    REQUIRE(r.deleted == expected);
    REQUIRE_FALSE(r.set[1].valid);
    REQUIRE(r.set[2] == s[2]);
    REQUIRE(r.set[0].valid);
    REQUIRE(r.set[0].embedding == s[0].embedding);
    REQUIRE(r.set[0].spatial.w == s[0].spatial.w);
  }
  SECTION("covering a neighbor's box deletes it") {
    auto big = make_set({{0.2, 0.2, 0.6, 0.6}, {0.7, 0.7, 0.1, 0.1}});
    auto r = move_element(big, 0, {0.7, 0.7});
    REQUIRE(r.deleted == std::vector<int>{1});
  }
  SECTION("errors") {
    REQUIRE_THROWS_AS(move_element(s, 0, {1.2, 0.5}), InputError);
    std::vector<int> one{1};
    auto d = delete_elements(s, one).set;
    REQUIRE_THROWS_AS(move_element(d, 1, {0.5, 0.5}), InputError);
    REQUIRE_THROWS_AS(move_element(s, 7, {0.5, 0.5}), InputError);
  }
}

TEST_CASE("move_elements translates a group without self-deletion", "[editing]") {
  auto s = make_set({{0.2, 0.2, 0.2, 0.2}, {0.3, 0.2, 0.2, 0.2}, {0.7, 0.2, 0.2, 0.2}, {0.2, 0.8, 0.1, 0.1}});
  std::vector<int> group{0, 1};
  auto r = move_elements(s, group, {0.4, 0.0});
  REQUIRE(r.set[0].valid);
  REQUIRE(r.set[1].valid);
  REQUIRE(r.set[0].spatial.x == Catch::Approx(0.6));
  REQUIRE(r.deleted == std::vector<int>{2});
  REQUIRE(r.set[3] == s[3]);
  REQUIRE(r.touched == group);
}

TEST_CASE("resize_element", "[editing]") {
  auto s = make_set({{0.3, 0.3, 0.2, 0.2}, {0.55, 0.3, 0.2, 0.2}, {0.8, 0.8, 0.1, 0.1}});
  SECTION("unit scale without overlaps is the identity") {
    auto r = resize_element(s, 2, 1.0, 1.0);
    REQUIRE(r.set == s);
  }
  SECTION("doubling engulfs the neighbor") {
    auto r = resize_element(s, 0, 2.0, 2.0);
    REQUIRE(r.deleted == std::vector<int>{1});
    REQUIRE(r.set[0].spatial.w == Catch::Approx(0.4));
  }
  SECTION("clamped to 1") {
    auto wide = make_set({{0.5, 0.5, 0.8, 0.2}});
    auto r = resize_element(wide, 0, 2.0, 1.0);
    REQUIRE(r.set[0].spatial.w == 1.0);
  }
  SECTION("non-positive scale") { REQUIRE_THROWS_AS(resize_element(s, 0, 0.0, 1.0), InputError); }
}

TEST_CASE("compose", "[editing]") {
  auto dst = make_set({{0.2, 0.2, 0.2, 0.2}, {0.8, 0.2, 0.2, 0.2}, {0.5, 0.8, 0.2, 0.2}});
  dst.invalidate(2);
  auto src = make_set({{0.1, 0.6, 0.1, 0.1}, {0.5, 0.5, 1.0, 1.0}});
  SECTION("zero source elements leave the destination unchanged") {
    REQUIRE(compose(dst, src, {}, {0.0, 0.0}).set == dst);
  }
  SECTION("one element over an empty region changes one slot") {
    std::vector<int> pick{0};
    auto r = compose(dst, src, pick, {0.4, 0.2});
    int changed = 0;
    for (std::size_t i = 0; i < dst.size(); ++i) changed += r.set[i] == dst[i] ? 0 : 1;
    REQUIRE(changed == 1);
    REQUIRE(r.touched == std::vector<int>{2});
    REQUIRE(r.set[2].embedding == src[0].embedding);
    REQUIRE(r.set[2].spatial.x == Catch::Approx(0.5));
  }
  SECTION("an element covering the image deletes every destination element") {
    std::vector<int> pick{1};
    auto r = compose(dst, src, pick, {0.0, 0.0});
    REQUIRE(r.set.valid_count() == 1);
    REQUIRE(r.deleted == std::vector<int>{0, 1});
  }
  SECTION("capacity overflow evicts the smallest destination element") {
    auto full = make_set({{0.2, 0.2, 0.3, 0.3}, {0.8, 0.2, 0.1, 0.1}, {0.5, 0.8, 0.2, 0.2}});
    auto one = make_set({{0.8, 0.8, 0.05, 0.05}});
    std::vector<int> pick{0};
    auto r = compose(full, one, pick, {0.0, 0.0});
    REQUIRE(r.deleted == std::vector<int>{1});
    REQUIRE(r.touched == std::vector<int>{1});
    REQUIRE(r.set[0] == full[0]);
    REQUIRE(r.set[2] == full[2]);
  }
  SECTION("invalid source index") {
    std::vector<int> pick{5};
    REQUIRE_THROWS_AS(compose(dst, src, pick, {0.0, 0.0}), InputError);
  }
}

TEST_CASE("edit scripts: invariants over random scripts", "[editing][property]") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto random_set = [&](std::size_t n) {
    std::vector<SpatialParams> g;
    for (std::size_t i = 0; i < n; ++i) g.push_back({u(rng), u(rng), 0.05 + 0.2 * u(rng), 0.05 + 0.2 * u(rng)});
    return make_set(g);
  };
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 3 + rng() % 10;
    ElementSet start = random_set(n);
    EditScript script;
    ElementSet cur = start;
    for (int k = 0; k < 4; ++k) {
      auto valid = cur.valid_count();
      if (valid == 0) break;
      std::vector<int> alive;
      for (std::size_t i = 0; i < cur.size(); ++i)
        if (cur[i].valid) alive.push_back(static_cast<int>(i));
      int pick = alive[rng() % alive.size()];
      EditOp op;
      switch (rng() % 5) {
        case 0: op = DeleteOp{{pick}}; break;
        case 1: op = MoveOp{pick, {u(rng), u(rng)}}; break;
        case 2: op = ResizeOp{pick, 0.5 + u(rng), 0.5 + u(rng)}; break;
        case 3: {
          const auto& sp = cur[static_cast<std::size_t>(pick)].spatial;
          op = MoveGroupOp{{pick}, {(0.5 - sp.x) * u(rng), (0.5 - sp.y) * u(rng)}};
          break;
        }
        default: {
          auto src = random_set(2);
          op = ComposeOp{src, {0, 1}, {0.0, 0.0}};
        }
      }
      cur = editing::apply(cur, op).set;
      script.ops.push_back(op);
    }

    auto result = apply_script(start, script);
    auto again = apply_script(start, script);
    REQUIRE(result.set == again.set);  // determinism
    REQUIRE(result.set == cur);
    REQUIRE(result.set.size() == n);  // length conservation

    // Last op that touched each slot (-1 = untouched).
    std::vector<int> last(n, -1);
    for (std::size_t k = 0; k < result.touched.size(); ++k)
      for (int slot : result.touched[k]) last[static_cast<std::size_t>(slot)] = static_cast<int>(k);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!result.set[i].valid || !result.set[j].valid) continue;
        if (last[i] < 0 && last[j] < 0) {
          // untouched survivors keep their payload
          REQUIRE(result.set[i] == start[i]);
          continue;
        }
        if (last[i] == last[j]) continue;  // placed together by one group op
        REQUIRE_FALSE(oracle_overlap(result.set[i].spatial, result.set[j].spatial));
      }

    auto text = script_to_json(script).dump();
    auto back = script_from_json(nlohmann::json::parse(text));
    REQUIRE(back == script);
    REQUIRE(script_to_json(back).dump() == text);
  }
}

TEST_CASE("script JSON rejects malformed ops", "[editing][io]") {
  using nlohmann::json;
  REQUIRE_THROWS_AS(script_from_json(json{{"schema", "other/1"}, {"ops", json::array()}}), InputError);
  REQUIRE_THROWS_AS(op_from_json(json{{"op", "explode"}}), InputError);
  REQUIRE_THROWS_AS(op_from_json(json{{"op", "move"}, {"index", 0}}), InputError);
  REQUIRE_THROWS_AS(op_from_json(json{{"op", "resize"}, {"index", 0}, {"scale", {1.0}}}), InputError);
  REQUIRE_THROWS_AS(op_from_json(json::array()), InputError);
  auto move = op_from_json(json{{"op", "move"}, {"index", 3}, {"centroid", {0.25, 0.75}}});
  REQUIRE(std::get<MoveOp>(move) == MoveOp{3, {0.25, 0.75}});
  auto group = op_from_json(json{{"op", "move"}, {"indices", {1, 2}}, {"offset", {0.1, 0.0}}});
  REQUIRE(std::get<MoveGroupOp>(group).indices == std::vector<int>{1, 2});
}

TEST_CASE("failing script op leaves nothing half-applied", "[editing]") {
  auto s = make_set({{0.2, 0.2, 0.2, 0.2}, {0.3, 0.2, 0.2, 0.2}});
  EditScript script{{MoveOp{0, {0.35, 0.2}}, DeleteOp{{9}}}};
  REQUIRE_THROWS_AS(apply_script(s, script), InputError);
  REQUIRE(invalid_slots(s).empty());
}
