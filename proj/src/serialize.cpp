#include "unicd/serialize.hpp"

#include <cstring>
#include <fstream>

namespace unicd {

namespace {

void write_bytes(std::ofstream& f, const void* p, std::size_t n) {
    f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!f) throw IoError("write failed");
}

void write_u8(std::ofstream& f, std::uint8_t v) { write_bytes(f, &v, 1); }

void write_u32(std::ofstream& f, std::uint32_t v) {
    std::uint8_t b[4] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
                         static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 24)};
    write_bytes(f, b, 4);
}

void write_u64(std::ofstream& f, std::uint64_t v) {
    write_u32(f, static_cast<std::uint32_t>(v));
    write_u32(f, static_cast<std::uint32_t>(v >> 32));
}

void write_f32(std::ofstream& f, double v) {
    const float fv = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &fv, 4);
    write_u32(f, bits);
}

void write_f64(std::ofstream& f, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u64(f, bits);
}

void write_str(std::ofstream& f, const std::string& s) {
    write_u32(f, static_cast<std::uint32_t>(s.size()));
    write_bytes(f, s.data(), s.size());
}

struct Reader {
    std::ifstream f;
    std::string path;

    explicit Reader(const std::string& p) : f(p, std::ios::binary), path(p) {
        if (!f) throw IoError("cannot open " + p);
    }

    void read_bytes(void* p, std::size_t n) {
        f.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (!f) throw IoError("truncated file: " + path);
    }

    std::uint8_t u8() {
        std::uint8_t v;
        read_bytes(&v, 1);
        return v;
    }

    std::uint32_t u32() {
        std::uint8_t b[4];
        read_bytes(b, 4);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }

    std::uint64_t u64() {
        const std::uint64_t lo = u32();
        const std::uint64_t hi = u32();
        return lo | (hi << 32);
    }

    double f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return static_cast<double>(v);
    }

    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }

    std::string str() {
        const std::uint32_t n = u32();
        if (n > (1u << 20)) throw IoError("implausible string length in " + path);
        std::string s(n, '\0');
        read_bytes(s.data(), n);
        return s;
    }
};

} // namespace

void save_utsr(const std::string& path, const Tensor& t) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path + " for writing");
    write_bytes(f, "UTSR", 4);
    write_u32(f, static_cast<std::uint32_t>(t.shape.size()));
    for (auto e : t.shape) write_u32(f, static_cast<std::uint32_t>(e));
    for (double v : t.data) write_f64(f, v);
    f.flush();
    if (!f) throw IoError("write failed: " + path);
}

TensorPtr load_utsr(const std::string& path) {
    Reader r(path);
    char magic[4];
    r.read_bytes(magic, 4);
    if (std::memcmp(magic, "UTSR", 4) != 0) throw IoError("bad magic in " + path);
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw IoError("implausible rank in " + path);
    std::vector<std::int64_t> shape(rank);
    for (auto& e : shape) e = static_cast<std::int64_t>(r.u32());
    const std::int64_t n = shape_numel(shape);
    std::vector<double> data(static_cast<std::size_t>(n));
    for (auto& v : data) v = r.f64();
    return tensor(std::move(shape), std::move(data));
}

namespace {
std::uint8_t to_byte(double v) {
    double x = v * 255.0 + 0.5;
    if (x < 0.0) x = 0.0;
    if (x > 255.0) x = 255.0;
    return static_cast<std::uint8_t>(x);
}
} // namespace

void save_pgm(const std::string& path, const std::vector<double>& gray, std::int64_t h,
              std::int64_t w) {
    if (static_cast<std::int64_t>(gray.size()) != h * w)
        throw ShapeError("save_pgm: size mismatch");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f << "P5\n" << w << " " << h << "\n255\n";
    for (double v : gray) {
        const std::uint8_t b = to_byte(v);
        write_bytes(f, &b, 1);
    }
    f.flush();
    if (!f) throw IoError("write failed: " + path);
}

void save_ppm(const std::string& path, const std::vector<double>& rgb, std::int64_t h,
              std::int64_t w) {
    if (static_cast<std::int64_t>(rgb.size()) != 3 * h * w)
        throw ShapeError("save_ppm: size mismatch");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f << "P6\n" << w << " " << h << "\n255\n";
    const std::int64_t hw = h * w;
    for (std::int64_t i = 0; i < hw; ++i)
        for (int c = 0; c < 3; ++c) {
            const std::uint8_t b = to_byte(rgb[c * hw + i]);
            write_bytes(f, &b, 1);
        }
    f.flush();
    if (!f) throw IoError("write failed: " + path);
}

std::vector<double> minmax_normalize(const std::vector<double>& v) {
    if (v.empty()) return {};
    double lo = v[0], hi = v[0];
    for (double x : v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    std::vector<double> out(v.size(), 0.0);
    if (hi > lo)
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - lo) / (hi - lo);
    return out;
}

void save_checkpoint(const std::string& path, const std::string& task, const ParamStore& store,
                     const AdamW* opt) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path + " for writing");
    write_bytes(f, "UCKP", 4);
    write_u32(f, 1); // version
    write_str(f, task);
    write_u64(f, store.all().size());
    for (const auto& p : store.all()) {
        write_str(f, p.name);
        write_u32(f, static_cast<std::uint32_t>(p.t->shape.size()));
        for (auto e : p.t->shape) write_u32(f, static_cast<std::uint32_t>(e));
        for (double v : p.t->data) write_f32(f, v);
    }
    write_u8(f, opt ? 1 : 0);
    if (opt) {
        write_u64(f, static_cast<std::uint64_t>(opt->t()));
        write_u64(f, opt->params().size());
        const auto& m = opt->m();
        const auto& v = opt->v();
        for (std::size_t i = 0; i < opt->params().size(); ++i) {
            write_str(f, opt->params()[i].name);
            write_u64(f, m[i].size());
            for (double x : m[i]) write_f32(f, x);
            for (double x : v[i]) write_f32(f, x);
        }
    }
    f.flush();
    if (!f) throw IoError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    Reader r(path);
    char magic[4];
    r.read_bytes(magic, 4);
    if (std::memcmp(magic, "UCKP", 4) != 0) throw IoError("bad magic in " + path);
    const std::uint32_t version = r.u32();
    if (version != 1) throw IoError("unsupported checkpoint version in " + path);
    Checkpoint ck;
    ck.task = r.str();
    const std::uint64_t np = r.u64();
    if (np > (1u << 20)) throw IoError("implausible parameter count in " + path);
    for (std::uint64_t i = 0; i < np; ++i) {
        std::string name = r.str();
        const std::uint32_t rank = r.u32();
        if (rank > 8) throw IoError("implausible rank in " + path);
        std::vector<std::int64_t> shape(rank);
        for (auto& e : shape) e = static_cast<std::int64_t>(r.u32());
        const std::int64_t n = shape_numel(shape);
        std::vector<double> data(static_cast<std::size_t>(n));
        for (auto& v : data) v = r.f32();
        ck.params.emplace_back(std::move(name), tensor(std::move(shape), std::move(data)));
    }
    if (r.u8()) {
        ck.has_optimizer = true;
        ck.opt_t = static_cast<std::int64_t>(r.u64());
        const std::uint64_t nb = r.u64();
        if (nb > (1u << 20)) throw IoError("implausible optimizer block count in " + path);
        for (std::uint64_t i = 0; i < nb; ++i) {
            OptStateBlock b;
            b.name = r.str();
            const std::uint64_t len = r.u64();
            if (len > (1u << 28)) throw IoError("implausible optimizer block size in " + path);
            b.m.resize(len);
            b.v.resize(len);
            for (auto& x : b.m) x = r.f32();
            for (auto& x : b.v) x = r.f32();
            ck.opt_state.push_back(std::move(b));
        }
    }
    return ck;
}

void apply_checkpoint(const Checkpoint& ck, ParamStore& store) {
    std::unordered_map<std::string, const TensorPtr*> by_name;
    for (const auto& [name, t] : ck.params) by_name[name] = &t;
    for (const auto& p : store.all()) {
        auto it = by_name.find(p.name);
        if (it == by_name.end())
            throw DataError("checkpoint missing parameter " + p.name);
        const TensorPtr& src = *it->second;
        if (src->shape != p.t->shape)
            throw ShapeError("checkpoint shape mismatch for " + p.name + ": " +
                             shape_str(src->shape) + " vs " + shape_str(p.t->shape));
        p.t->data = src->data;
        p.t->grad.clear();
    }
}

void apply_optimizer_state(const Checkpoint& ck, AdamW& opt) {
    if (!ck.has_optimizer) throw DataError("checkpoint has no optimizer state");
    std::unordered_map<std::string, const OptStateBlock*> by_name;
    for (const auto& b : ck.opt_state) by_name[b.name] = &b;
    opt.set_t(ck.opt_t);
    for (std::size_t i = 0; i < opt.params().size(); ++i) {
        auto it = by_name.find(opt.params()[i].name);
        if (it == by_name.end())
            throw DataError("checkpoint missing optimizer state for " + opt.params()[i].name);
        if (it->second->m.size() != opt.m()[i].size())
            throw ShapeError("optimizer state size mismatch for " + opt.params()[i].name);
        opt.m()[i] = it->second->m;
        opt.v()[i] = it->second->v;
    }
}

} // namespace unicd
