#pragma once

#include <array>

#include "unicd/ops.hpp"
#include "unicd/tensor.hpp"

namespace unicd {

enum class ScanDir { row = 0, row_rev = 1, col = 2, col_rev = 3 };

constexpr std::array<ScanDir, 4> kScanDirs{ScanDir::row, ScanDir::row_rev, ScanDir::col,
                                           ScanDir::col_rev};

// registered pre/post stitched along the width -> [C,H,2W].
TensorPtr horizontal_concat(const TensorPtr& pre, const TensorPtr& post);
// Ablation variant: stacked along channels -> [2C,H,W].
TensorPtr channel_concat(const TensorPtr& pre, const TensorPtr& post);

// Sequence position of pixel (y,x) on an HxW plane for a direction.
std::int64_t scan_position(ScanDir dir, std::int64_t y, std::int64_t x, std::int64_t h,
                           std::int64_t w);

// [C,H,W] -> [L,C] with L = H·W, ordered by the direction.
TensorPtr scan_to_seq(const TensorPtr& x, ScanDir dir);
// [L,C] -> [C,H,W]; exact inverse of scan_to_seq for the same direction.
TensorPtr seq_to_spatial(const TensorPtr& s, ScanDir dir, std::int64_t h, std::int64_t w);

// Fixed-order elementwise sum of the four directional reconstructions.
TensorPtr aggregate_directions(const TensorPtr& f_row, const TensorPtr& f_row_rev,
                               const TensorPtr& f_col, const TensorPtr& f_col_rev);

} // namespace unicd
