#pragma once

#include "unicd/model.hpp"

namespace unicd {

// Axis-aligned rectangle (kind 0) or ellipse (kind 1) in pixel coordinates.
// cls_* = semantic class occupying the shape at each time, 0 = absent.
struct GeoObject {
    int kind = 0;
    double cx = 0, cy = 0;
    double rx = 0, ry = 0;
    int cls_t1 = 0, cls_t2 = 0;
    int damage = 0; // 1..D for buildings, 0 otherwise
    double tint = 0.0;

    bool contains(double x, double y) const;
};

struct LabelSet {
    std::vector<int> bcd, t1, t2, loc, dmg;
};

struct SyntheticSample {
    Task task = Task::bcd;
    std::int64_t h = 0, w = 0;
    int classes = 0;
    int damage_levels = 0;
    TensorPtr pre, post;
    std::vector<int> bcd, t1, t2, loc, dmg;
    std::vector<GeoObject> geometry;
    std::vector<GeoObject> distractors; // label-free pseudo-change regions
    std::uint64_t seed = 0;
    int index = 0;
};

// Recompute every label map from geometry alone (painter's order: later
// objects overwrite earlier ones).
LabelSet rasterize_labels(const std::vector<GeoObject>& geometry, Task task, std::int64_t h,
                          std::int64_t w, int classes, int damage_levels);

std::vector<SyntheticSample> generate_dataset(Task task, int n, std::int64_t h, std::int64_t w,
                                              int classes, int damage_levels, std::uint64_t seed);

// rot90-multiple + flips applied jointly to images, labels and geometry.
SyntheticSample apply_transform(const SyntheticSample& s, int rot90_count, bool flip_lr,
                                bool flip_tb);
// Seeded draw of the transform triple, then apply_transform.
SyntheticSample augment(const SyntheticSample& s, std::uint64_t seed);

// Bit-stable content hash over images + labels (dataset identity checks).
std::uint64_t sample_hash(const SyntheticSample& s);
std::uint64_t dataset_hash(const std::vector<SyntheticSample>& ds);

} // namespace unicd
