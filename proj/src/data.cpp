#include "unicd/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace unicd {

bool GeoObject::contains(double x, double y) const {
    if (kind == 0) return std::abs(x - cx) <= rx && std::abs(y - cy) <= ry;
    const double dx = (x - cx) / rx, dy = (y - cy) / ry;
    return dx * dx + dy * dy <= 1.0;
}

namespace {

// class color palette on [0.2, 0.8], decorrelated across channels
double palette(int cls, int ch) {
    const double v = 0.618033988749895 * cls + 0.3819660112501051 * (ch + 1) +
                     0.05 * cls * (ch + 1);
    return 0.2 + 0.6 * (v - std::floor(v));
}

// painter's order: index of the last object covering (x, y) at the given time
int winner_at(const std::vector<GeoObject>& geometry, double x, double y, bool t2) {
    int win = -1;
    for (std::size_t j = 0; j < geometry.size(); ++j) {
        const int cls = t2 ? geometry[j].cls_t2 : geometry[j].cls_t1;
        if (cls > 0 && geometry[j].contains(x, y)) win = static_cast<int>(j);
    }
    return win;
}

} // namespace

LabelSet rasterize_labels(const std::vector<GeoObject>& geometry, Task task, std::int64_t h,
                          std::int64_t w, int classes, int damage_levels) {
    LabelSet ls;
    const std::int64_t hw = h * w;
    ls.bcd.assign(hw, 0);
    ls.t1.assign(hw, 0);
    ls.t2.assign(hw, 0);
    ls.loc.assign(hw, 0);
    ls.dmg.assign(hw, 0);
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            const std::int64_t i = y * w + x;
            const int w1 = winner_at(geometry, static_cast<double>(x), static_cast<double>(y), false);
            const int w2 = winner_at(geometry, static_cast<double>(x), static_cast<double>(y), true);
            const int c1 = w1 >= 0 ? geometry[w1].cls_t1 : 0;
            const int c2 = w2 >= 0 ? geometry[w2].cls_t2 : 0;
            if (c1 > classes || c2 > classes) throw DataError("rasterize_labels: class out of range");
            ls.t1[i] = c1;
            ls.t2[i] = c2;
            ls.bcd[i] = c1 != c2 ? 1 : 0;
            if (task == Task::bda) {
                if (w1 >= 0) {
                    ls.loc[i] = 1;
                    const int d = geometry[w1].damage;
                    if (d < 1 || d > damage_levels)
                        throw DataError("rasterize_labels: damage level out of range");
                    ls.dmg[i] = d;
                }
            }
        }
    }
    return ls;
}

namespace {

struct BgField {
    double f1x, f1y, p1, a1;
    double f2x, f2y, p2, a2;
};

double bg_value(const BgField& f, double xn, double yn) {
    return 0.42 + f.a1 * std::sin(2.0 * M_PI * (f.f1x * xn + f.f1y * yn) + f.p1) +
           f.a2 * std::sin(2.0 * M_PI * (f.f2x * xn + f.f2y * yn) + f.p2);
}

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

} // namespace

std::vector<SyntheticSample> generate_dataset(Task task, int n, std::int64_t h, std::int64_t w,
                                              int classes, int damage_levels, std::uint64_t seed) {
    if (h <= 0 || w <= 0 || h % 32 != 0 || w % 32 != 0)
        throw ConfigError("generate_dataset: H and W must be positive multiples of 32");
    if (n < 0) throw ConfigError("generate_dataset: n must be >= 0");
    if (classes < 1) throw ConfigError("generate_dataset: need at least one object class");
    if (damage_levels < 1) throw ConfigError("generate_dataset: need at least one damage level");

    std::vector<SyntheticSample> ds;
    ds.reserve(static_cast<std::size_t>(n));
    const std::int64_t hw = h * w;

    for (int idx = 0; idx < n; ++idx) {
        Rng r(hash_combine(seed, static_cast<std::uint64_t>(idx) + 1));
        SyntheticSample s;
        s.task = task;
        s.h = h;
        s.w = w;
        s.classes = classes;
        s.damage_levels = damage_levels;
        s.seed = seed;
        s.index = idx;

        BgField bg[3];
        for (int c = 0; c < 3; ++c) {
            bg[c].f1x = r.uniform(0.5, 2.5);
            bg[c].f1y = r.uniform(0.5, 2.5);
            bg[c].p1 = r.uniform(0.0, 2.0 * M_PI);
            bg[c].a1 = r.uniform(0.06, 0.12);
            bg[c].f2x = r.uniform(2.0, 5.0);
            bg[c].f2y = r.uniform(2.0, 5.0);
            bg[c].p2 = r.uniform(0.0, 2.0 * M_PI);
            bg[c].a2 = r.uniform(0.02, 0.05);
        }

        const int n_obj = task == Task::bda ? 4 + static_cast<int>(r.uniform_int(3))
                                            : 3 + static_cast<int>(r.uniform_int(4));
        const double rmin = 2.5;
        const double rmax = std::max(rmin + 1.0, std::min(h, w) / 4.5);
        const int dmg_base = static_cast<int>(r.uniform_int(static_cast<std::uint64_t>(damage_levels)));
        bool any_change = false;
        for (int j = 0; j < n_obj; ++j) {
            GeoObject o;
            o.kind = task == Task::bda ? 0 : static_cast<int>(r.uniform_int(2));
            o.cx = r.uniform(0.12 * w, 0.88 * w);
            o.cy = r.uniform(0.12 * h, 0.88 * h);
            o.rx = r.uniform(rmin, rmax);
            o.ry = r.uniform(rmin, rmax);
            o.tint = r.uniform(-0.05, 0.05);
            const int cls = 1 + static_cast<int>(r.uniform_int(static_cast<std::uint64_t>(classes)));
            if (task == Task::bda) {
                o.cls_t1 = o.cls_t2 = cls;
                o.damage = 1 + (dmg_base + j) % damage_levels;
                if (o.damage != 1) any_change = true;
            } else {
                const double p = r.uniform();
                if (p < 0.35) {
                    o.cls_t1 = o.cls_t2 = cls;
                } else if (p < 0.55) {
                    o.cls_t2 = cls;
                    any_change = true;
                } else if (p < 0.78) {
                    o.cls_t1 = cls;
                    any_change = true;
                } else {
                    o.cls_t1 = cls;
                    o.cls_t2 = classes >= 2 ? 1 + (cls % classes) : 0;
                    any_change = true;
                }
            }
            s.geometry.push_back(o);
        }
        if (!any_change && !s.geometry.empty()) {
            s.geometry[0].cls_t2 = 0; // force at least one disappearing object
        }

        const int n_dis = 1 + static_cast<int>(r.uniform_int(2));
        for (int j = 0; j < n_dis; ++j) {
            GeoObject d;
            d.kind = 1;
            d.cx = r.uniform(0.1 * w, 0.9 * w);
            d.cy = r.uniform(0.1 * h, 0.9 * h);
            d.rx = r.uniform(0.12 * w, 0.28 * w);
            d.ry = r.uniform(0.12 * h, 0.28 * h);
            d.tint = r.uniform(0.10, 0.16); // additive brightness bump
            s.distractors.push_back(d);
        }
        const double global_shift = r.uniform(-0.06, 0.06);

        std::vector<double> bg_noise(3 * hw), post_noise(3 * hw), corr_noise(3 * hw);
        for (auto& v : bg_noise) v = r.uniform(-1.0, 1.0);
        for (auto& v : post_noise) v = r.uniform(-1.0, 1.0);
        for (auto& v : corr_noise) v = r.uniform(-1.0, 1.0);

        LabelSet ls = rasterize_labels(s.geometry, task, h, w, classes, damage_levels);
        s.bcd = std::move(ls.bcd);
        s.t1 = std::move(ls.t1);
        s.t2 = std::move(ls.t2);
        s.loc = std::move(ls.loc);
        s.dmg = std::move(ls.dmg);

        std::vector<double> pre(3 * hw), post(3 * hw);
        for (std::int64_t y = 0; y < h; ++y) {
            for (std::int64_t x = 0; x < w; ++x) {
                const std::int64_t i = y * w + x;
                const double xd = static_cast<double>(x), yd = static_cast<double>(y);
                const double xn = xd / static_cast<double>(w), yn = yd / static_cast<double>(h);
                const int w1 = winner_at(s.geometry, xd, yd, false);
                const int w2 = winner_at(s.geometry, xd, yd, true);
                for (int c = 0; c < 3; ++c) {
                    const std::int64_t k = c * hw + i;
                    const double bgv = bg_value(bg[c], xn, yn) + 0.01 * bg_noise[k];
                    double pv = bgv, qv = bgv;
                    if (w1 >= 0)
                        pv = palette(s.geometry[w1].cls_t1, c) + s.geometry[w1].tint;
                    if (w2 >= 0)
                        qv = palette(s.geometry[w2].cls_t2, c) + s.geometry[w2].tint;
                    if (task == Task::bda && w1 >= 0) {
                        // grade the post appearance by damage level
                        switch (s.geometry[w1].damage) {
                            case 1: break;
                            case 2: qv = qv * 0.92 + 0.06 * corr_noise[k]; break;
                            case 3: qv = qv * 0.75 + 0.15 * corr_noise[k]; break;
                            default: qv = bgv * 0.6 + 0.25 * corr_noise[k]; break;
                        }
                    }
                    for (const auto& d : s.distractors)
                        if (d.contains(xd, yd)) qv += d.tint;
                    qv += global_shift + 0.02 * post_noise[k];
                    pre[k] = clamp01(pv);
                    post[k] = clamp01(qv);
                }
            }
        }
        s.pre = tensor({3, h, w}, pre);
        s.post = tensor({3, h, w}, post);
        ds.push_back(std::move(s));
    }
    return ds;
}

namespace {

std::vector<int> rot90_labels(const std::vector<int>& in, std::int64_t h, std::int64_t w) {
    std::vector<int> out(in.size());
    // out dims: (w, h); out(y,x) = in(h-1-x, y)
    for (std::int64_t y = 0; y < w; ++y)
        for (std::int64_t x = 0; x < h; ++x)
            out[y * h + x] = in[(h - 1 - x) * w + y];
    return out;
}

std::vector<int> fliplr_labels(const std::vector<int>& in, std::int64_t h, std::int64_t w) {
    std::vector<int> out(in.size());
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) out[y * w + x] = in[y * w + (w - 1 - x)];
    return out;
}

std::vector<int> fliptb_labels(const std::vector<int>& in, std::int64_t h, std::int64_t w) {
    std::vector<int> out(in.size());
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) out[y * w + x] = in[(h - 1 - y) * w + x];
    return out;
}

template <typename F>
TensorPtr transform_image(const TensorPtr& img, std::int64_t oh, std::int64_t ow, F&& src_index) {
    const std::int64_t h = img->shape[1], w = img->shape[2];
    std::vector<double> out(static_cast<std::size_t>(3 * oh * ow));
    for (int c = 0; c < 3; ++c)
        for (std::int64_t y = 0; y < oh; ++y)
            for (std::int64_t x = 0; x < ow; ++x)
                out[(c * oh + y) * ow + x] = img->data[c * h * w + src_index(y, x)];
    return tensor({3, oh, ow}, out);
}

void rot90_geometry(std::vector<GeoObject>& gs, std::int64_t h) {
    for (auto& g : gs) {
        const double cx = g.cx, cy = g.cy, rx = g.rx, ry = g.ry;
        g.cx = static_cast<double>(h - 1) - cy;
        g.cy = cx;
        g.rx = ry;
        g.ry = rx;
    }
}

} // namespace

SyntheticSample apply_transform(const SyntheticSample& s, int rot90_count, bool flip_lr,
                                bool flip_tb) {
    const int k_rot = ((rot90_count % 4) + 4) % 4;
    const bool fl = flip_lr;
    const bool ft = flip_tb;

    SyntheticSample out = s;
    for (int t = 0; t < k_rot; ++t) {
        const std::int64_t h = out.h, w = out.w;
        out.bcd = rot90_labels(out.bcd, h, w);
        out.t1 = rot90_labels(out.t1, h, w);
        out.t2 = rot90_labels(out.t2, h, w);
        out.loc = rot90_labels(out.loc, h, w);
        out.dmg = rot90_labels(out.dmg, h, w);
        out.pre = transform_image(out.pre, w, h,
                                  [h, w](std::int64_t y, std::int64_t x) { return (h - 1 - x) * w + y; });
        out.post = transform_image(out.post, w, h,
                                   [h, w](std::int64_t y, std::int64_t x) { return (h - 1 - x) * w + y; });
        rot90_geometry(out.geometry, h);
        rot90_geometry(out.distractors, h);
        std::swap(out.h, out.w);
    }
    if (fl) {
        const std::int64_t h = out.h, w = out.w;
        out.bcd = fliplr_labels(out.bcd, h, w);
        out.t1 = fliplr_labels(out.t1, h, w);
        out.t2 = fliplr_labels(out.t2, h, w);
        out.loc = fliplr_labels(out.loc, h, w);
        out.dmg = fliplr_labels(out.dmg, h, w);
        out.pre = transform_image(out.pre, h, w,
                                  [w](std::int64_t y, std::int64_t x) { return y * w + (w - 1 - x); });
        out.post = transform_image(out.post, h, w,
                                   [w](std::int64_t y, std::int64_t x) { return y * w + (w - 1 - x); });
        for (auto& g : out.geometry) g.cx = static_cast<double>(w - 1) - g.cx;
        for (auto& g : out.distractors) g.cx = static_cast<double>(w - 1) - g.cx;
    }
    if (ft) {
        const std::int64_t h = out.h, w = out.w;
        out.bcd = fliptb_labels(out.bcd, h, w);
        out.t1 = fliptb_labels(out.t1, h, w);
        out.t2 = fliptb_labels(out.t2, h, w);
        out.loc = fliptb_labels(out.loc, h, w);
        out.dmg = fliptb_labels(out.dmg, h, w);
        out.pre = transform_image(out.pre, h, w,
                                  [h, w](std::int64_t y, std::int64_t x) { return (h - 1 - y) * w + x; });
        out.post = transform_image(out.post, h, w,
                                   [h, w](std::int64_t y, std::int64_t x) { return (h - 1 - y) * w + x; });
        for (auto& g : out.geometry) g.cy = static_cast<double>(h - 1) - g.cy;
        for (auto& g : out.distractors) g.cy = static_cast<double>(h - 1) - g.cy;
    }
    return out;
}

SyntheticSample augment(const SyntheticSample& s, std::uint64_t seed) {
    Rng r(hash_combine(seed, 0xa09ULL));
    const int k_rot = static_cast<int>(r.uniform_int(4));
    const bool fl = r.uniform() < 0.5;
    const bool ft = r.uniform() < 0.5;
    return apply_transform(s, k_rot, fl, ft);
}

std::uint64_t sample_hash(const SyntheticSample& s) {
    std::uint64_t acc = 0x5eedf00dULL;
    auto fold_u64 = [&acc](std::uint64_t v) { acc = hash_combine(acc, v); };
    auto fold_double = [&](double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof(bits));
        fold_u64(bits);
    };
    fold_u64(static_cast<std::uint64_t>(s.h));
    fold_u64(static_cast<std::uint64_t>(s.w));
    for (double v : s.pre->data) fold_double(v);
    for (double v : s.post->data) fold_double(v);
    for (const auto* m : {&s.bcd, &s.t1, &s.t2, &s.loc, &s.dmg})
        for (int v : *m) fold_u64(static_cast<std::uint64_t>(v) + 1);
    return acc;
}

std::uint64_t dataset_hash(const std::vector<SyntheticSample>& ds) {
    std::uint64_t acc = 0xda7a5e7ULL;
    for (const auto& s : ds) acc = hash_combine(acc, sample_hash(s));
    return acc;
}

} // namespace unicd
