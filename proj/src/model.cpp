#include "unicd/model.hpp"

#include <cmath>

namespace unicd {

std::string task_name(Task t) {
    switch (t) {
    case Task::bcd: return "bcd";
    case Task::scd: return "scd";
    case Task::bda: return "bda";
    }
    return "bcd";
}

Task task_from_name(const std::string& s) {
    if (s == "bcd") return Task::bcd;
    if (s == "scd") return Task::scd;
    if (s == "bda") return Task::bda;
    throw ConfigError("unknown task '" + s + "' (expected bcd|scd|bda)");
}

std::string group_name(ParamGroup g) {
    switch (g) {
    case ParamGroup::backbone: return "backbone";
    case ParamGroup::fcpg: return "fcpg";
    case ParamGroup::decoder: return "decoder";
    case ParamGroup::head: return "head";
    }
    return "backbone";
}

TensorPtr ParamStore::add(ParamGroup g, const std::string& name, TensorPtr t) {
    if (index_.count(name)) throw ContractError("duplicate parameter name " + name);
    t->requires_grad = true;
    index_[name] = items_.size();
    items_.push_back({name, g, t});
    return t;
}

std::vector<Param> ParamStore::in_group(ParamGroup g) const {
    std::vector<Param> out;
    for (const auto& p : items_)
        if (p.group == g) out.push_back(p);
    return out;
}

TensorPtr ParamStore::find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return nullptr;
    return items_[it->second].t;
}

std::int64_t ParamStore::element_count(ParamGroup g) const {
    std::int64_t n = 0;
    for (const auto& p : items_)
        if (p.group == g) n += p.t->size();
    return n;
}

std::int64_t ParamStore::element_count() const {
    std::int64_t n = 0;
    for (const auto& p : items_) n += p.t->size();
    return n;
}

void ModelConfig::validate() const {
    for (int i = 0; i < 3; ++i)
        if (dims[static_cast<std::size_t>(i + 1)] != 2 * dims[static_cast<std::size_t>(i)])
            throw ConfigError("stage dims must double per stage, got " +
                              std::to_string(dims[static_cast<std::size_t>(i)]) + " -> " +
                              std::to_string(dims[static_cast<std::size_t>(i + 1)]));
    for (auto d : depths)
        if (d < 1) throw ConfigError("stage depths must be >= 1");
    if (dims[0] < 2 || dims[0] % 2 != 0) throw ConfigError("dims[0] must be even and >= 2");
    if (state_dim < 1) throw ConfigError("state_dim must be >= 1");
    if (c_hid % 2 != 0) throw ConfigError("c_hid must be even (head reduces to c_hid/2)");
    for (auto d : dims)
        if (d % fcpg_groups != 0)
            throw ConfigError("fcpg group count must divide every stage dim");
    if (classes < 2) throw ConfigError("scd needs at least 2 semantic classes");
    if (damage_levels < 2) throw ConfigError("bda needs at least 2 damage levels");
    if (droppath_max < 0 || droppath_max >= 1) throw ConfigError("droppath_max must be in [0,1)");
    if (head_dropout < 0 || head_dropout >= 1) throw ConfigError("head_dropout must be in [0,1)");
    if (tau <= 0) throw ConfigError("tau must be > 0");
    if (norm_eps <= 0) throw ConfigError("norm_eps must be > 0");
}

namespace {

double inv_sigmoid(double y) { return std::log(y / (1.0 - y)); }

} // namespace

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(cfg_.init_seed);

    auto conv_w = [&](ParamGroup g, const std::string& name, std::int64_t cout, std::int64_t cin,
                      std::int64_t k) {
        double s = 1.0 / std::sqrt(static_cast<double>(cin * k * k));
        return store_.add(g, name, rand_uniform({cout, cin, k, k}, rng, -s, s));
    };
    auto vec0 = [&](ParamGroup g, const std::string& name, std::int64_t n) {
        return store_.add(g, name, zeros({n}));
    };
    auto vec1 = [&](ParamGroup g, const std::string& name, std::int64_t n) {
        return store_.add(g, name, full({n}, 1.0));
    };
    auto lin_w = [&](ParamGroup g, const std::string& name, std::int64_t dout, std::int64_t din) {
        double s = 1.0 / std::sqrt(static_cast<double>(din));
        return store_.add(g, name, rand_uniform({dout, din}, rng, -s, s));
    };
    auto make_conv = [&](ParamGroup g, const std::string& name, std::int64_t cout,
                         std::int64_t cin, std::int64_t k) {
        Conv c;
        c.w = conv_w(g, name + ".w", cout, cin, k);
        c.b = vec0(g, name + ".b", cout);
        return c;
    };
    auto make_norm = [&](ParamGroup g, const std::string& name, std::int64_t n) {
        Norm nm;
        nm.g = vec1(g, name + ".g", n);
        nm.b = vec0(g, name + ".b", n);
        return nm;
    };

    const auto B = ParamGroup::backbone;
    const std::int64_t cin = cfg_.concat == ConcatMode::width ? 3 : 6;
    stem1_ = make_conv(B, "backbone.stem.conv1", cfg_.dims[0] / 2, cin, 3);
    stem_n1_ = make_norm(B, "backbone.stem.norm1", cfg_.dims[0] / 2);
    stem2_ = make_conv(B, "backbone.stem.conv2", cfg_.dims[0], cfg_.dims[0] / 2, 3);
    stem_n2_ = make_norm(B, "backbone.stem.norm2", cfg_.dims[0]);

    std::int64_t total_blocks = 0;
    for (auto d : cfg_.depths) total_blocks += d;
    std::int64_t block_index = 0;

    for (int s = 0; s < 4; ++s) {
        auto& st = stages_[static_cast<std::size_t>(s)];
        std::int64_t C = cfg_.dims[static_cast<std::size_t>(s)];
        std::int64_t N = cfg_.state_dim;
        for (std::int64_t bI = 0; bI < cfg_.depths[static_cast<std::size_t>(s)]; ++bI) {
            std::string pre = "backbone.s" + std::to_string(s) + ".b" + std::to_string(bI);
            VssBlock blk;
            blk.ln1 = make_norm(B, pre + ".ln1", C);
            blk.in_proj = make_conv(B, pre + ".in_proj", C, C, 1);
            {
                double sc = 1.0 / 3.0; // 1/sqrt(9)
                blk.dw_w = store_.add(B, pre + ".dw.w", rand_uniform({C, 3, 3}, rng, -sc, sc));
                blk.dw_b = vec0(B, pre + ".dw.b", C);
            }
            blk.ssm.w_delta = lin_w(B, pre + ".ssm.w_delta", C, C);
            blk.ssm.b_delta = vec0(B, pre + ".ssm.b_delta", C);
            blk.ssm.w_b = lin_w(B, pre + ".ssm.w_b", N, C);
            blk.ssm.w_c = lin_w(B, pre + ".ssm.w_c", N, C);
            {
                std::vector<double> a(static_cast<std::size_t>(C * N));
                for (std::int64_t d = 0; d < C; ++d)
                    for (std::int64_t n = 0; n < N; ++n)
                        a[static_cast<std::size_t>(d * N + n)] = -static_cast<double>(n + 1);
                blk.ssm.A = store_.add(B, pre + ".ssm.A", tensor({C, N}, std::move(a)));
                blk.ssm.Dskip = vec1(B, pre + ".ssm.D", C);
            }
            blk.out_proj = make_conv(B, pre + ".out_proj", C, C, 1);
            blk.ln2 = make_norm(B, pre + ".ln2", C);
            blk.mlp1 = make_conv(B, pre + ".mlp1", 4 * C, C, 1);
            blk.mlp2 = make_conv(B, pre + ".mlp2", C, 4 * C, 1);
            blk.droppath = total_blocks > 1 ? cfg_.droppath_max *
                                                  static_cast<double>(block_index) /
                                                  static_cast<double>(total_blocks - 1)
                                            : 0.0;
            ++block_index;
            st.blocks.push_back(std::move(blk));
        }

        // FCPG parameters exist in every mode so the two-stage checkpoint
        // layout is independent of the ablation switch.
        {
            std::string pre = "fcpg.s" + std::to_string(s);
            const auto G = ParamGroup::fcpg;
            auto& f = st.fcpg;
            f.theta_a = store_.add(G, pre + ".theta_a", scalar(inv_sigmoid(0.1)));
            f.theta_b = store_.add(G, pre + ".theta_b", scalar(inv_sigmoid((0.3 - 0.1) / 0.9)));
            f.alpha = store_.add(G, pre + ".alpha", scalar(0.1));
            const char* band[2] = {"low", "high"};
            for (int bI = 0; bI < 2; ++bI) {
                std::string bp = pre + "." + band[bI];
                f.fc1_w[static_cast<std::size_t>(bI)] = lin_w(G, bp + ".fc1.w", C, C);
                f.fc1_b[static_cast<std::size_t>(bI)] = vec0(G, bp + ".fc1.b", C);
                f.fc2_w[static_cast<std::size_t>(bI)] = lin_w(G, bp + ".fc2.w", C, C);
                f.fc2_b[static_cast<std::size_t>(bI)] = vec0(G, bp + ".fc2.b", C);
                f.spat_w[static_cast<std::size_t>(bI)] = conv_w(G, bp + ".spat.w", 1, C, 3);
                f.spat_b[static_cast<std::size_t>(bI)] = vec0(G, bp + ".spat.b", 1);
            }
            f.fuse_w = conv_w(G, pre + ".fuse.w", C, 2 * C, 1);
            f.fuse_b = vec0(G, pre + ".fuse.b", C);
            f.spm_w = conv_w(G, pre + ".spm.w", cfg_.fcpg_groups, cfg_.fcpg_groups, 3);
            f.spm_b = vec0(G, pre + ".spm.b", cfg_.fcpg_groups);
            f.groups = cfg_.fcpg_groups;
            f.tau = cfg_.tau;
            f.spm_enabled = cfg_.spm_enabled;
            f.mode = cfg_.fcpg_mode;
        }

        if (s < 3) {
            st.has_down = true;
            st.down = make_conv(B, "backbone.down" + std::to_string(s),
                                cfg_.dims[static_cast<std::size_t>(s + 1)], C, 2);
            st.down_norm =
                make_norm(B, "backbone.down" + std::to_string(s) + ".norm",
                          cfg_.dims[static_cast<std::size_t>(s + 1)]);
        }
    }

    const auto D = ParamGroup::decoder;
    for (int i = 0; i < 4; ++i)
        lateral_[static_cast<std::size_t>(i)] =
            make_conv(D, "decoder.lateral" + std::to_string(i), cfg_.c_dec,
                      cfg_.dims[static_cast<std::size_t>(i)], 1);
    for (int i = 0; i < 3; ++i)
        td_[static_cast<std::size_t>(i)] =
            make_conv(D, "decoder.td" + std::to_string(i), cfg_.c_dec, cfg_.c_dec, 3);
    fuse_ = make_conv(D, "decoder.fuse", cfg_.c_dec, 4 * cfg_.c_dec, 3);

    const auto HG = ParamGroup::head;
    head1_ = make_conv(HG, "head.conv1", cfg_.c_hid, cfg_.c_dec, 3);
    head_bn1_ = make_norm(HG, "head.bn1", cfg_.c_hid);
    head2_ = make_conv(HG, "head.conv2", cfg_.c_hid / 2, cfg_.c_hid, 3);
    head_bn2_ = make_norm(HG, "head.bn2", cfg_.c_hid / 2);

    std::int64_t zc = cfg_.c_hid / 2;
    switch (cfg_.task) {
    case Task::bcd:
        task_change_ = make_conv(HG, "head.task.change", 2, zc, 1);
        break;
    case Task::scd: {
        task_change_ = make_conv(HG, "head.task.change", 2, zc, 1);
        std::int64_t K1 = cfg_.classes + 1;
        double s = 1.0 / std::sqrt(static_cast<double>(zc));
        sem_w_t1_ = store_.add(HG, "head.task.sem_t1.w", rand_uniform({K1, zc, 1, 1}, rng, -s, s));
        sem_b_t1_ = vec0(HG, "head.task.sem_t1.b", K1);
        sem_w_t2_ = store_.add(HG, "head.task.sem_t2.w", rand_uniform({K1, zc, 1, 1}, rng, -s, s));
        sem_b_t2_ = vec0(HG, "head.task.sem_t2.b", K1);
        break;
    }
    case Task::bda:
        task_loc_ = make_conv(HG, "head.task.loc", 2, zc, 1);
        task_dmg_ = make_conv(HG, "head.task.dmg", cfg_.damage_levels + 1, zc, 1);
        break;
    }
}

TensorPtr Model::vss_forward(const TensorPtr& x, const VssBlock& blk, RunCtx& ctx) const {
    std::int64_t H = x->extent(1), W = x->extent(2);
    auto n1 = layer_norm(x, blk.ln1.g, blk.ln1.b, cfg_.norm_eps);
    auto h = conv2d(n1, blk.in_proj.w, blk.in_proj.b, 1, 0);
    h = silu(depthwise_conv2d(h, blk.dw_w, blk.dw_b, 1, 1));
    std::vector<TensorPtr> dir_out;
    dir_out.reserve(4);
    for (ScanDir dir : kScanDirs) {
        auto seq = scan_to_seq(h, dir);
        auto y = ssm_apply(seq, blk.ssm);
        dir_out.push_back(seq_to_spatial(y, dir, H, W));
    }
    auto merged = aggregate_directions(dir_out[0], dir_out[1], dir_out[2], dir_out[3]);
    auto branch = conv2d(merged, blk.out_proj.w, blk.out_proj.b, 1, 0);
    auto z = add(x, drop_path(branch, blk.droppath, ctx.key(), ctx.training));
    auto n2 = layer_norm(z, blk.ln2.g, blk.ln2.b, cfg_.norm_eps);
    auto m = conv2d(gelu(conv2d(n2, blk.mlp1.w, blk.mlp1.b, 1, 0)), blk.mlp2.w, blk.mlp2.b, 1, 0);
    return add(z, drop_path(m, blk.droppath, ctx.key(), ctx.training));
}

TensorPtr Model::half(const TensorPtr& x, int which) const {
    if (cfg_.concat == ConcatMode::channel) return x;
    std::int64_t W = x->extent(2) / 2;
    return which == 0 ? crop_width(x, 0, W) : crop_width(x, W, 2 * W);
}

TensorPtr Model::avg_halves(const TensorPtr& x) const {
    if (cfg_.concat == ConcatMode::channel) return x;
    return mul_const(add(half(x, 0), half(x, 1)), 0.5);
}

HeadOutputs Model::forward(const TensorPtr& pre, const TensorPtr& post, RunCtx& ctx) {
    if (pre->rank() != 3 || pre->shape != post->shape || pre->extent(0) != 3)
        throw ShapeError("forward: need a registered pair of [3,H,W] images");
    auto plane = cfg_.concat == ConcatMode::width ? horizontal_concat(pre, post)
                                                  : channel_concat(pre, post);
    std::int64_t Hp = plane->extent(1), Wp = plane->extent(2);
    if (Hp % 32 != 0 || Wp % 32 != 0)
        throw ConfigError("encoder input " + std::to_string(Hp) + "x" + std::to_string(Wp) +
                          " after concatenation must be divisible by 32");

    auto x = conv2d(plane, stem1_.w, stem1_.b, 2, 1);
    x = gelu(layer_norm(x, stem_n1_.g, stem_n1_.b, cfg_.norm_eps));
    x = conv2d(x, stem2_.w, stem2_.b, 2, 1);
    x = layer_norm(x, stem_n2_.g, stem_n2_.b, cfg_.norm_eps);

    HeadOutputs out;
    for (int s = 0; s < 4; ++s) {
        auto& st = stages_[static_cast<std::size_t>(s)];
        for (const auto& blk : st.blocks) x = vss_forward(x, blk, ctx);
        x = fcpg_forward(x, st.fcpg);
        out.features[static_cast<std::size_t>(s)] = x;
        if (st.has_down) {
            x = conv2d(x, st.down.w, st.down.b, 2, 0);
            x = layer_norm(x, st.down_norm.g, st.down_norm.b, cfg_.norm_eps);
        }
    }

    // top-down FPN over the lateral projections
    std::array<TensorPtr, 4> P;
    for (int i = 0; i < 4; ++i)
        P[static_cast<std::size_t>(i)] =
            conv2d(out.features[static_cast<std::size_t>(i)],
                   lateral_[static_cast<std::size_t>(i)].w,
                   lateral_[static_cast<std::size_t>(i)].b, 1, 0);
    std::array<TensorPtr, 4> N;
    N[3] = P[3];
    for (int i = 2; i >= 0; --i) {
        auto up = bilinear_upsample(N[static_cast<std::size_t>(i + 1)],
                                    P[static_cast<std::size_t>(i)]->extent(1),
                                    P[static_cast<std::size_t>(i)]->extent(2));
        N[static_cast<std::size_t>(i)] =
            conv2d(add(up, P[static_cast<std::size_t>(i)]), td_[static_cast<std::size_t>(i)].w,
                   td_[static_cast<std::size_t>(i)].b, 1, 1);
    }
    std::int64_t h1 = N[0]->extent(1), w1 = N[0]->extent(2);
    auto cat = concat_channel({bilinear_upsample(N[3], h1, w1), bilinear_upsample(N[2], h1, w1),
                               bilinear_upsample(N[1], h1, w1), N[0]});
    auto cfeat = conv2d(cat, fuse_.w, fuse_.b, 1, 1);
    cfeat = bilinear_upsample(cfeat, Hp, Wp);

    // unified head
    auto z1 = relu(batch_norm2d(conv2d(cfeat, head1_.w, head1_.b, 1, 1), head_bn1_.g, head_bn1_.b,
                                cfg_.norm_eps));
    z1 = dropout(z1, cfg_.head_dropout, ctx.key(), ctx.training);
    auto z2 = relu(batch_norm2d(conv2d(z1, head2_.w, head2_.b, 1, 1), head_bn2_.g, head_bn2_.b,
                                cfg_.norm_eps));

    switch (cfg_.task) {
    case Task::bcd:
        out.change = avg_halves(conv2d(z2, task_change_.w, task_change_.b, 1, 0));
        break;
    case Task::scd: {
        out.change = avg_halves(conv2d(z2, task_change_.w, task_change_.b, 1, 0));
        // Background suppression: foreground semantic logits ride on a
        // stop-gradient change probability; at p=0 they sit at their bias floor.
        auto p_change = crop_channel(softmax_channels(out.change), 1, 2);
        auto p_map = reshape(p_change, {p_change->extent(1), p_change->extent(2)})->detach();
        std::int64_t K1 = cfg_.classes + 1;
        auto sem_head = [&](const TensorPtr& w, const TensorPtr& b, int which) {
            auto raw = conv2d(half(z2, which), w, nullptr, 1, 0);
            auto bg = crop_channel(raw, 0, 1);
            auto fg = scale_map(crop_channel(raw, 1, K1), p_map);
            return add_bias_channels(concat_channel({bg, fg}), b);
        };
        out.sem_t1 = sem_head(sem_w_t1_, sem_b_t1_, 0);
        out.sem_t2 = sem_head(sem_w_t2_, sem_b_t2_, 1);
        break;
    }
    case Task::bda:
        out.loc = conv2d(half(z2, 0), task_loc_.w, task_loc_.b, 1, 0);
        out.dmg = conv2d(half(z2, 1), task_dmg_.w, task_dmg_.b, 1, 0);
        break;
    }
    return out;
}

} // namespace unicd
