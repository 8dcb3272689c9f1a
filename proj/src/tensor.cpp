#include "unicd/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace unicd {

namespace {

Precision g_precision = Precision::f64;
bool g_grad_enabled = true;
bool g_debug_checks = false;
std::atomic<std::int64_t> g_next_id{1};

} // namespace

Precision precision_mode() { return g_precision; }
void set_precision_mode(Precision p) { g_precision = p; }
bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }
bool debug_checks() { return g_debug_checks; }
void set_debug_checks(bool on) { g_debug_checks = on; }

std::int64_t shape_numel(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (std::int64_t e : shape) {
        if (e < 1) throw ShapeError("extents must be >= 1, got " + shape_str(shape));
        n *= e;
    }
    return n;
}

std::string shape_str(const std::vector<std::int64_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

void quantize_f32(std::vector<double>& values) {
    for (double& v : values) v = static_cast<double>(static_cast<float>(v));
}

namespace {

void check_finite(const Tensor& t) {
    for (double v : t.data) {
        if (!std::isfinite(v)) {
            throw NumericError("non-finite value produced by op '" + t.op + "' with shape " +
                               shape_str(t.shape));
        }
    }
}

TensorPtr make_leaf(std::vector<std::int64_t> shape, std::vector<double> data,
                    bool requires_grad) {
    auto n = shape_numel(shape);
    if (n != static_cast<std::int64_t>(data.size()))
        throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_str(shape));
    if (g_precision == Precision::f32) quantize_f32(data);
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->data = std::move(data);
    t->requires_grad = requires_grad;
    t->id = g_next_id.fetch_add(1);
    return t;
}

} // namespace

TensorPtr tensor(std::vector<std::int64_t> shape, std::vector<double> data, bool requires_grad) {
    return make_leaf(std::move(shape), std::move(data), requires_grad);
}

TensorPtr zeros(std::vector<std::int64_t> shape, bool requires_grad) {
    auto n = shape_numel(shape);
    return make_leaf(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0),
                     requires_grad);
}

TensorPtr full(std::vector<std::int64_t> shape, double value, bool requires_grad) {
    auto n = shape_numel(shape);
    return make_leaf(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), value),
                     requires_grad);
}

TensorPtr scalar(double value, bool requires_grad) {
    return make_leaf({1}, {value}, requires_grad);
}

TensorPtr rand_uniform(std::vector<std::int64_t> shape, Rng& rng, double lo, double hi,
                       bool requires_grad) {
    auto n = shape_numel(shape);
    std::vector<double> d(static_cast<std::size_t>(n));
    for (double& v : d) v = rng.uniform(lo, hi);
    return make_leaf(std::move(shape), std::move(d), requires_grad);
}

TensorPtr rand_normal(std::vector<std::int64_t> shape, Rng& rng, double mean, double stddev,
                      bool requires_grad) {
    auto n = shape_numel(shape);
    std::vector<double> d(static_cast<std::size_t>(n));
    for (double& v : d) v = mean + stddev * rng.normal();
    return make_leaf(std::move(shape), std::move(d), requires_grad);
}

TensorPtr make_node(std::string op, std::vector<std::int64_t> shape, std::vector<double> data,
                    std::vector<TensorPtr> inputs, std::function<void(Tensor&)> backward) {
    auto n = shape_numel(shape);
    if (n != static_cast<std::int64_t>(data.size()))
        throw ShapeError("op '" + op + "' produced data length " + std::to_string(data.size()) +
                         " for shape " + shape_str(shape));
    if (g_precision == Precision::f32) quantize_f32(data);

    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->data = std::move(data);
    t->op = std::move(op);
    t->id = g_next_id.fetch_add(1);

    bool track = g_grad_enabled;
    if (track) {
        bool any = false;
        for (const auto& in : inputs)
            if (in && in->requires_grad) { any = true; break; }
        track = any;
    }
    if (track) {
        t->requires_grad = true;
        t->inputs = std::move(inputs);
        t->backward_fn = std::move(backward);
    }
    if (g_debug_checks) check_finite(*t);
    return t;
}

TensorPtr Tensor::detach() const {
    auto t = std::make_shared<Tensor>();
    t->shape = shape;
    t->data = data;
    t->requires_grad = false;
    t->id = g_next_id.fetch_add(1);
    return t;
}

void Tensor::backward() {
    if (size() != 1) throw ContractError("backward() requires a scalar loss, got shape " +
                                         shape_str(shape));
    if (!requires_grad)
        throw ContractError("backward() on a tensor that does not require gradients");
    if (backward_done)
        throw ContractError("backward() called twice on the same graph without re-running forward");
    backward_done = true;

    // Collect reachable nodes, then sweep in descending creation id. Creation
    // ids are a topological order by construction.
    std::vector<Tensor*> nodes;
    std::unordered_set<const Tensor*> seen;
    std::vector<Tensor*> stack{this};
    seen.insert(this);
    while (!stack.empty()) {
        Tensor* t = stack.back();
        stack.pop_back();
        nodes.push_back(t);
        for (const auto& in : t->inputs) {
            if (in && in->requires_grad && !seen.count(in.get())) {
                seen.insert(in.get());
                stack.push_back(in.get());
            }
        }
    }
    std::sort(nodes.begin(), nodes.end(),
              [](const Tensor* a, const Tensor* b) { return a->id > b->id; });

    ensure_grad();
    grad[0] += 1.0;
    for (Tensor* t : nodes) {
        if (t->backward_fn) {
            t->ensure_grad();
            t->backward_fn(*t);
        }
    }
}

} // namespace unicd
