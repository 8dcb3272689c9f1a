#include "unicd/scan.hpp"

namespace unicd {

TensorPtr horizontal_concat(const TensorPtr& pre, const TensorPtr& post) {
    if (pre->shape != post->shape)
        throw ShapeError("horizontal_concat: pair must be registered (equal shapes), got " +
                         shape_str(pre->shape) + " vs " + shape_str(post->shape));
    return concat_width(pre, post);
}

TensorPtr channel_concat(const TensorPtr& pre, const TensorPtr& post) {
    if (pre->shape != post->shape)
        throw ShapeError("channel_concat: pair must be registered (equal shapes)");
    return concat_channel({pre, post});
}

std::int64_t scan_position(ScanDir dir, std::int64_t y, std::int64_t x, std::int64_t h,
                           std::int64_t w) {
    std::int64_t L = h * w;
    switch (dir) {
    case ScanDir::row: return y * w + x;
    case ScanDir::row_rev: return L - 1 - (y * w + x);
    case ScanDir::col: return x * h + y;
    case ScanDir::col_rev: return L - 1 - (x * h + y);
    }
    return 0;
}

TensorPtr scan_to_seq(const TensorPtr& x, ScanDir dir) {
    if (x->rank() != 3) throw ShapeError("scan_to_seq: need [C,H,W], got " + shape_str(x->shape));
    std::int64_t C = x->extent(0), H = x->extent(1), W = x->extent(2), L = H * W;
    std::vector<double> out(static_cast<std::size_t>(L * C));
    for (std::int64_t y = 0; y < H; ++y)
        for (std::int64_t xx = 0; xx < W; ++xx) {
            std::int64_t p = scan_position(dir, y, xx, H, W);
            for (std::int64_t c = 0; c < C; ++c)
                out[static_cast<std::size_t>(p * C + c)] =
                    x->data[static_cast<std::size_t>((c * H + y) * W + xx)];
        }
    return make_node("scan_to_seq", {L, C}, std::move(out), {x}, [dir, C, H, W](Tensor& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        in.ensure_grad();
        for (std::int64_t y = 0; y < H; ++y)
            for (std::int64_t xx = 0; xx < W; ++xx) {
                std::int64_t p = scan_position(dir, y, xx, H, W);
                for (std::int64_t c = 0; c < C; ++c)
                    in.grad[static_cast<std::size_t>((c * H + y) * W + xx)] +=
                        self.grad[static_cast<std::size_t>(p * C + c)];
            }
    });
}

TensorPtr seq_to_spatial(const TensorPtr& s, ScanDir dir, std::int64_t h, std::int64_t w) {
    if (s->rank() != 2) throw ShapeError("seq_to_spatial: need [L,C], got " + shape_str(s->shape));
    std::int64_t L = s->extent(0), C = s->extent(1);
    if (L != h * w)
        throw ContractError("seq_to_spatial: L = " + std::to_string(L) +
                            " inconsistent with origin shape " + std::to_string(h) + "x" +
                            std::to_string(w));
    std::vector<double> out(static_cast<std::size_t>(C * L));
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t xx = 0; xx < w; ++xx) {
            std::int64_t p = scan_position(dir, y, xx, h, w);
            for (std::int64_t c = 0; c < C; ++c)
                out[static_cast<std::size_t>((c * h + y) * w + xx)] =
                    s->data[static_cast<std::size_t>(p * C + c)];
        }
    return make_node("seq_to_spatial", {C, h, w}, std::move(out), {s}, [dir, C, h, w](Tensor& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        in.ensure_grad();
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t xx = 0; xx < w; ++xx) {
                std::int64_t p = scan_position(dir, y, xx, h, w);
                for (std::int64_t c = 0; c < C; ++c)
                    in.grad[static_cast<std::size_t>(p * C + c)] +=
                        self.grad[static_cast<std::size_t>((c * h + y) * w + xx)];
            }
    });
}

TensorPtr aggregate_directions(const TensorPtr& f_row, const TensorPtr& f_row_rev,
                               const TensorPtr& f_col, const TensorPtr& f_col_rev) {
    return add_n({f_row, f_row_rev, f_col, f_col_rev});
}

} // namespace unicd
