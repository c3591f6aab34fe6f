#pragma once

// Edit operations on an ElementSet.
//
// Collisions use the axis-aligned box centroid +- size / 2 of each element.
// Two boxes collide only when they overlap with positive area; touching
// edges do not count. Embeddings are never modified by move or resize.

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "elemedit/elements.hpp"

namespace elemedit::editing {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Vec2&) const = default;
};

struct Box {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;
};

Box box_of(const SpatialParams& s);
bool boxes_collide(const Box& a, const Box& b);

struct DeleteOp {
  std::vector<int> indices;
  bool operator==(const DeleteOp&) const = default;
};

/// Places one element at a new centroid.
struct MoveOp {
  int index = 0;
  Vec2 centroid;
  bool operator==(const MoveOp&) const = default;
};

/// Translates a group of elements together; members never delete each other.
struct MoveGroupOp {
  std::vector<int> indices;
  Vec2 offset;
  bool operator==(const MoveGroupOp&) const = default;
};

struct ResizeOp {
  int index = 0;
  double scale_w = 1.0;
  double scale_h = 1.0;
  bool operator==(const ResizeOp&) const = default;
};

/// Inserts source elements (centroids shifted by offset) into the destination.
struct ComposeOp {
  ElementSet source;
  std::vector<int> indices;
  Vec2 offset;
  bool operator==(const ComposeOp&) const = default;
};

using EditOp = std::variant<DeleteOp, MoveOp, MoveGroupOp, ResizeOp, ComposeOp>;

struct EditScript {
  std::vector<EditOp> ops;
  bool operator==(const EditScript&) const = default;
};

struct EditResult {
  ElementSet set;
  std::vector<int> deleted;  // collision deletions and compose evictions, ascending
  std::vector<int> touched;  // slots holding moved, resized or inserted elements
};

EditResult delete_elements(const ElementSet& set, std::span<const int> indices);
EditResult move_element(const ElementSet& set, int index, Vec2 centroid);
EditResult move_elements(const ElementSet& set, std::span<const int> indices, Vec2 offset);
EditResult resize_element(const ElementSet& set, int index, double scale_w, double scale_h);
EditResult compose(const ElementSet& dst, const ElementSet& src, std::span<const int> indices, Vec2 offset);

EditResult apply(const ElementSet& set, const EditOp& op);

struct ScriptResult {
  ElementSet set;
  std::vector<int> deleted;                 // union over ops, ascending
  std::vector<std::vector<int>> touched;    // per op
};

/// Applies ops in order; the first failing op throws and nothing is returned.
ScriptResult apply_script(const ElementSet& set, const EditScript& script);

nlohmann::json op_to_json(const EditOp& op);
EditOp op_from_json(const nlohmann::json& j);

/// `elemedit.script/1` document with an "op" discriminator per entry.
nlohmann::json script_to_json(const EditScript& script);
EditScript script_from_json(const nlohmann::json& doc);

}  // namespace elemedit::editing
