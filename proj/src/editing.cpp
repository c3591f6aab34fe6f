#include "elemedit/editing.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <string>

namespace elemedit::editing {

namespace {

void check_index(const ElementSet& set, int index) {
  if (index < 0 || static_cast<std::size_t>(index) >= set.size()) {
    throw InputError("element index " + std::to_string(index) + " out of range [0, " + std::to_string(set.size()) +
                     ")");
  }
}

void check_valid(const ElementSet& set, int index) {
  check_index(set, index);
  if (!set[static_cast<std::size_t>(index)].valid) {
    throw InputError("element " + std::to_string(index) + " is not valid");
  }
}

bool in_unit_square(double x, double y) { return x >= 0.0 && x <= 1.0 && y >= 0.0 && y <= 1.0; }

std::vector<int> unique_sorted(std::span<const int> indices) {
  std::vector<int> out(indices.begin(), indices.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Invalidates every valid element outside `protect` whose box collides with
// any box in `boxes`; returns the deleted slots.
std::vector<int> delete_colliding(ElementSet& set, const std::vector<Box>& boxes, const std::vector<int>& protect) {
  std::vector<int> deleted;
  for (std::size_t j = 0; j < set.size(); ++j) {
    if (!set[j].valid) continue;
    if (std::binary_search(protect.begin(), protect.end(), static_cast<int>(j))) continue;
    const Box bj = box_of(set[j].spatial);
    for (const auto& b : boxes) {
      if (boxes_collide(b, bj)) {
        set.invalidate(j);
        deleted.push_back(static_cast<int>(j));
        break;
      }
    }
  }
  return deleted;
}

Vec2 vec2_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) throw InputError("expected a [x, y] pair");
  return {j[0].get<double>(), j[1].get<double>()};
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

}  // namespace

Box box_of(const SpatialParams& s) {
  return {s.x - s.w / 2.0, s.y - s.h / 2.0, s.x + s.w / 2.0, s.y + s.h / 2.0};
}

bool boxes_collide(const Box& a, const Box& b) {
  double ox = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  double oy = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  return ox > 0.0 && oy > 0.0;
}

EditResult delete_elements(const ElementSet& set, std::span<const int> indices) {
  for (int i : indices) check_index(set, i);
  EditResult r{set, {}, {}};
  for (int i : unique_sorted(indices)) r.set.invalidate(static_cast<std::size_t>(i));
  return r;
}

EditResult move_element(const ElementSet& set, int index, Vec2 centroid) {
  check_valid(set, index);
  if (!in_unit_square(centroid.x, centroid.y)) throw InputError("new centroid must lie in [0, 1]^2");
  EditResult r{set, {}, {index}};
  auto& e = r.set[static_cast<std::size_t>(index)];
  e.spatial.x = centroid.x;
  e.spatial.y = centroid.y;
  r.deleted = delete_colliding(r.set, {box_of(e.spatial)}, {index});
  return r;
}

EditResult move_elements(const ElementSet& set, std::span<const int> indices, Vec2 offset) {
  const auto group = unique_sorted(indices);
  for (int i : group) {
    check_valid(set, i);
    const auto& s = set[static_cast<std::size_t>(i)].spatial;
    if (!in_unit_square(s.x + offset.x, s.y + offset.y)) {
      throw InputError("offset moves element " + std::to_string(i) + " outside [0, 1]^2");
    }
  }
  EditResult r{set, {}, group};
  std::vector<Box> boxes;
  for (int i : group) {
    auto& s = r.set[static_cast<std::size_t>(i)].spatial;
    s.x += offset.x;
    s.y += offset.y;
    boxes.push_back(box_of(s));
  }
  r.deleted = delete_colliding(r.set, boxes, group);
  return r;
}

EditResult resize_element(const ElementSet& set, int index, double scale_w, double scale_h) {
  check_valid(set, index);
  if (!(scale_w > 0.0) || !(scale_h > 0.0)) throw InputError("scale factors must be positive");
  EditResult r{set, {}, {index}};
  auto& s = r.set[static_cast<std::size_t>(index)].spatial;
  s.w = std::min(1.0, s.w * scale_w);
  s.h = std::min(1.0, s.h * scale_h);
  if (!(s.w > 0.0) || !(s.h > 0.0)) throw InputError("resize collapsed the element to zero size");
  r.deleted = delete_colliding(r.set, {box_of(s)}, {index});
  return r;
}

EditResult compose(const ElementSet& dst, const ElementSet& src, std::span<const int> indices, Vec2 offset) {
  if (indices.empty()) return {dst, {}, {}};
  if (src.embedding_dim != dst.embedding_dim) throw InputError("source and destination embedding sizes differ");
  const auto picked = unique_sorted(indices);
  if (picked.size() > dst.size()) throw InputError("more source elements than destination slots");

  std::vector<Element> inserted;
  std::vector<Box> boxes;
  for (int i : picked) {
    check_valid(src, i);
    Element e = src[static_cast<std::size_t>(i)];
    e.spatial.x += offset.x;
    e.spatial.y += offset.y;
    if (!in_unit_square(e.spatial.x, e.spatial.y)) {
      throw InputError("offset places source element " + std::to_string(i) + " outside [0, 1]^2");
    }
    boxes.push_back(box_of(e.spatial));
    inserted.push_back(std::move(e));
  }

  EditResult r{dst, {}, {}};
  r.deleted = delete_colliding(r.set, boxes, {});

  std::vector<int> free_slots;
  std::vector<int> occupied;
  for (std::size_t j = 0; j < r.set.size(); ++j) (r.set[j].valid ? occupied : free_slots).push_back(static_cast<int>(j));
  if (free_slots.size() < inserted.size()) {
    // Evict the smallest remaining destination elements first.
    std::stable_sort(occupied.begin(), occupied.end(), [&](int a, int b) {
      const auto& sa = r.set[static_cast<std::size_t>(a)].spatial;
      const auto& sb = r.set[static_cast<std::size_t>(b)].spatial;
      return sa.w * sa.h < sb.w * sb.h;
    });
    for (int j : occupied) {
      if (free_slots.size() >= inserted.size()) break;
      r.set.invalidate(static_cast<std::size_t>(j));
      r.deleted.push_back(j);
      free_slots.push_back(j);
    }
    std::sort(free_slots.begin(), free_slots.end());
  }
  for (std::size_t k = 0; k < inserted.size(); ++k) {
    int slot = free_slots[k];
    r.set[static_cast<std::size_t>(slot)] = std::move(inserted[k]);
    r.touched.push_back(slot);
  }
  std::sort(r.deleted.begin(), r.deleted.end());
  std::sort(r.touched.begin(), r.touched.end());
  return r;
}

EditResult apply(const ElementSet& set, const EditOp& op) {
  return std::visit(Overloaded{
                        [&](const DeleteOp& o) { return delete_elements(set, o.indices); },
                        [&](const MoveOp& o) { return move_element(set, o.index, o.centroid); },
                        [&](const MoveGroupOp& o) { return move_elements(set, o.indices, o.offset); },
                        [&](const ResizeOp& o) { return resize_element(set, o.index, o.scale_w, o.scale_h); },
                        [&](const ComposeOp& o) { return compose(set, o.source, o.indices, o.offset); },
                    },
                    op);
}

ScriptResult apply_script(const ElementSet& set, const EditScript& script) {
  ScriptResult out{set, {}, {}};
  std::set<int> deleted;
  for (const auto& op : script.ops) {
    EditResult r = editing::apply(out.set, op);
    out.set = std::move(r.set);
    deleted.insert(r.deleted.begin(), r.deleted.end());
    out.touched.push_back(std::move(r.touched));
  }
  out.deleted.assign(deleted.begin(), deleted.end());
  return out;
}

nlohmann::json op_to_json(const EditOp& op) {
  return std::visit(
      Overloaded{
          [](const DeleteOp& o) { return nlohmann::json{{"op", "delete"}, {"indices", o.indices}}; },
          [](const MoveOp& o) {
            return nlohmann::json{{"op", "move"}, {"index", o.index}, {"centroid", {o.centroid.x, o.centroid.y}}};
          },
          [](const MoveGroupOp& o) {
            return nlohmann::json{{"op", "move"}, {"indices", o.indices}, {"offset", {o.offset.x, o.offset.y}}};
          },
          [](const ResizeOp& o) {
            return nlohmann::json{{"op", "resize"}, {"index", o.index}, {"scale", {o.scale_w, o.scale_h}}};
          },
          [](const ComposeOp& o) {
            return nlohmann::json{{"op", "compose"},
                                  {"source", elements_to_json(o.source)},
                                  {"indices", o.indices},
                                  {"offset", {o.offset.x, o.offset.y}}};
          },
      },
      op);
}

EditOp op_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("op")) throw InputError("edit op must be an object with an \"op\" field");
  try {
    const auto kind = j.at("op").get<std::string>();
    if (kind == "delete") return DeleteOp{j.at("indices").get<std::vector<int>>()};
    if (kind == "move") {
      if (j.contains("centroid")) return MoveOp{j.at("index").get<int>(), vec2_from_json(j.at("centroid"))};
      return MoveGroupOp{j.at("indices").get<std::vector<int>>(), vec2_from_json(j.at("offset"))};
    }
    if (kind == "resize") {
      Vec2 s = vec2_from_json(j.at("scale"));
      return ResizeOp{j.at("index").get<int>(), s.x, s.y};
    }
    if (kind == "compose") {
      Vec2 off = j.contains("offset") ? vec2_from_json(j.at("offset")) : Vec2{};
      return ComposeOp{elements_from_json(j.at("source")), j.at("indices").get<std::vector<int>>(), off};
    }
    throw InputError("unknown edit op \"" + kind + "\"");
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed edit op: ") + e.what());
  }
}

nlohmann::json script_to_json(const EditScript& script) {
  nlohmann::json ops = nlohmann::json::array();
  for (const auto& op : script.ops) ops.push_back(op_to_json(op));
  return {{"schema", "elemedit.script/1"}, {"ops", ops}};
}

EditScript script_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || doc.value("schema", "") != "elemedit.script/1") {
    throw InputError("not an elemedit.script/1 document");
  }
  EditScript script;
  for (const auto& j : doc.at("ops")) script.ops.push_back(op_from_json(j));
  return script;
}

}  // namespace elemedit::editing
