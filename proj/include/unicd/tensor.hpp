#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "unicd/common.hpp"

namespace unicd {

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense row-major tensor node. Doubles as the computation record entry:
// `id` is the creation-order position (inputs always have smaller ids than
// the node they feed), `op` names the producing operation and `inputs` are
// the record's input references. Leaves have no inputs.
class Tensor : public std::enable_shared_from_this<Tensor> {
public:
    std::vector<std::int64_t> shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad; // lazily sized to data.size()

    std::int64_t id = 0;
    std::string op;           // empty for leaves
    std::vector<TensorPtr> inputs;
    std::function<void(Tensor&)> backward_fn; // reads this->grad, accumulates into inputs
    bool backward_done = false;

    Tensor() = default;
    Tensor(const Tensor&) = delete;
    Tensor& operator=(const Tensor&) = delete;

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    std::int64_t numel() const { return size(); }
    std::int64_t rank() const { return static_cast<std::int64_t>(shape.size()); }
    std::int64_t extent(int axis) const { return shape[static_cast<std::size_t>(axis)]; }

    double item() const {
        if (size() != 1) throw ContractError("item() requires a scalar tensor");
        return data[0];
    }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }

    void zero_grad() {
        if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
    }

    // Runs reverse-mode differentiation from this scalar node. Each reachable
    // node is visited exactly once in reverse topological order. A second call
    // on the same node without rebuilding the graph is rejected.
    void backward();

    TensorPtr detach() const;
};

std::int64_t shape_numel(const std::vector<std::int64_t>& shape);
std::string shape_str(const std::vector<std::int64_t>& shape);

// Leaf constructors.
TensorPtr tensor(std::vector<std::int64_t> shape, std::vector<double> data,
                 bool requires_grad = false);
TensorPtr zeros(std::vector<std::int64_t> shape, bool requires_grad = false);
TensorPtr full(std::vector<std::int64_t> shape, double value, bool requires_grad = false);
TensorPtr scalar(double value, bool requires_grad = false);
TensorPtr rand_uniform(std::vector<std::int64_t> shape, Rng& rng, double lo, double hi,
                       bool requires_grad = false);
TensorPtr rand_normal(std::vector<std::int64_t> shape, Rng& rng, double mean, double stddev,
                      bool requires_grad = false);

// Graph node constructor used by every op. Propagates requires_grad from the
// inputs (under the global grad mode), applies f32 value rounding in training
// precision, and runs the debug finiteness scan.
TensorPtr make_node(std::string op, std::vector<std::int64_t> shape, std::vector<double> data,
                    std::vector<TensorPtr> inputs, std::function<void(Tensor&)> backward);

// Rounds every element through IEEE binary32 (used for f32 mode and the
// checkpoint payload contract).
void quantize_f32(std::vector<double>& values);

inline double quantize_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

} // namespace unicd
