#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <set>

#include "elemedit/dropout.hpp"
#include "elemedit/elements.hpp"

using namespace elemedit;
using namespace elemedit::dropout;

namespace {

ElementSet full_set(std::size_t n) {
  ElementSet s(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    s[i].valid = true;
    s[i].embedding = {1.0f, static_cast<float>(i)};
    s[i].spatial = {0.5, 0.5, 0.1, 0.1};
  }
  return s;
}

}  // namespace

TEST_CASE("spatial embedding", "[elements][spatial]") {
  SECTION("invalid elements map to zero") {
    auto v = embed_spatial({}, false, 4);
    REQUIRE(v.size() == 32);
    for (float f : v) REQUIRE(f == 0.0f);
  }
  SECTION("band 0 of x = 0.5 is (sin(pi/2), cos(pi/2))") {
    auto v = embed_spatial({0.5, 0.0, 0.0, 0.0}, true, 4);
    REQUIRE(v[0] == 1.0f);
    REQUIRE(std::abs(v[1]) < 1e-7f);
    // band 1: sin(pi), cos(pi)
    REQUIRE(std::abs(v[2]) < 1e-7f);
    REQUIRE(v[3] == -1.0f);
  }
  SECTION("changing w only changes the w block") {
    auto a = embed_spatial({0.3, 0.6, 0.2, 0.4}, true, 4);
    auto b = embed_spatial({0.3, 0.6, 0.7, 0.4}, true, 4);
    for (std::size_t i = 0; i < a.size(); ++i) {
      const bool w_block = i >= 16 && i < 24;
      if (w_block) continue;
      REQUIRE(a[i] == b[i]);
    }
    bool differs = false;
    for (std::size_t i = 16; i < 24; ++i) differs |= a[i] != b[i];
    REQUIRE(differs);
  }
}

TEST_CASE("condition dropout rates", "[dropout]") {
  std::mt19937_64 rng(5);
  ConditionDropout p;
  int text = 0, elems = 0, both = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    auto d = sample_condition_dropout(p, rng);
    if (d.null_text && d.null_elements) ++both;
    else if (d.null_text) ++text;
    else if (d.null_elements) ++elems;
  }
  REQUIRE(std::abs(text / double(n) - 0.30) <= 0.02);
  REQUIRE(std::abs(elems / double(n) - 0.10) <= 0.02);
  REQUIRE(std::abs(both / double(n) - 0.10) <= 0.02);

  ConditionDropout off{0.0, 0.0, 0.0};
  for (int i = 0; i < 1000; ++i) REQUIRE(sample_condition_dropout(off, rng) == DropDecision{});
  REQUIRE_THROWS_AS(nlohmann::json({{"text_only", 0.8}, {"both", 0.5}}).get<ConditionDropout>(), InputError);
}

TEST_CASE("mask sampler stays within the area band", "[dropout]") {
  std::mt19937_64 rng(1);
  MaskSampler sampler;
  for (int i = 0; i < 300; ++i) {
    auto m = sampler.sample(32, 32, rng);
    REQUIRE(m.area_fraction() >= 0.05);
    REQUIRE(m.area_fraction() <= 0.40);
  }
}

TEST_CASE("element dropout over a foreign partition", "[dropout]") {
  auto labels = partition::grid_labels(32, 32, 4);
  auto set = full_set(16);
  SECTION("empty mask leaves the set unchanged") { REQUIRE(dropout_elements(set, Mask(32, 32, 0), labels) == set); }
  SECTION("full mask invalidates everything") {
    REQUIRE(dropout_elements(set, Mask(32, 32, 1), labels).valid_count() == 0);
  }
  SECTION("rectangle covering exactly cells 3 and 7") {
    Mask m(32, 32);
    for (int y = 0; y < 16; ++y)
      for (int x = 24; x < 32; ++x) m.at(y, x) = 1;
    std::set<int> expected;
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        if (m.at(y, x)) expected.insert(labels.at(y, x));
    REQUIRE(expected == std::set<int>{3, 7});
    auto out = dropout_elements(set, m, labels);
    for (std::size_t n = 0; n < 16; ++n) REQUIRE(out[n].valid == !expected.count(static_cast<int>(n)));
  }
  SECTION("random masks against a brute-force scan") {
    std::mt19937_64 rng(77);
    MaskSampler sampler;
    for (int i = 0; i < 50; ++i) {
      auto m = sampler.sample(32, 32, rng);
      std::vector<int> hit(16, 0);
      for (std::size_t p = 0; p < m.values.size(); ++p)
        if (m.values[p]) hit[static_cast<std::size_t>(labels.labels[p])] = 1;
      auto out = dropout_elements(set, m, labels);
      for (std::size_t n = 0; n < 16; ++n) REQUIRE(out[n].valid == !hit[n]);
    }
  }
  SECTION("size mismatch") { REQUIRE_THROWS_AS(dropout_elements(set, Mask(16, 16), labels), InputError); }
}
