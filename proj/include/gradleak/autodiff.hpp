#pragma once

// Reverse-mode automatic differentiation over dense tensors.
//
// Operations evaluate eagerly and record a node on the tape when any input
// requires a gradient. Backward functions are written in terms of the same
// differentiable operations, so the gradients returned by grad(..., true) are
// graph nodes themselves and can be differentiated again. That is what lets
// the gradient-matching loss be differentiated with respect to the dummy input.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gradleak/tensor.hpp"

namespace gradleak::ad {

class Node;

/// Handle to a tape node. Copies share the node.
class Var {
public:
    Var() = default;

    /// Leaf holding `value`. Leaves are the only valid `wrt` targets of grad().
    static Var leaf(Tensor value, bool requires_grad = true);
    static Var constant(Tensor value);

    bool defined() const noexcept { return node_ != nullptr; }
    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    bool requires_grad() const;
    bool is_leaf() const;
    const char* op() const;

    /// Constant holding a copy of this value, cut off from the tape.
    Var detach() const;

    const Node* node() const noexcept { return node_.get(); }

private:
    friend class Node;
    friend Var make_op(const char*, Tensor, std::vector<Var>, std::function<std::vector<Var>(const Var&, const Var&)>);
    friend std::vector<Var> grad(const Var&, std::span<const Var>, bool);

    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    std::shared_ptr<Node> node_;
};

/// Maps (self, d root / d self) to one gradient per input. Entries for inputs
/// that do not require a gradient may be left undefined.
using BackwardFn = std::function<std::vector<Var>(const Var& self, const Var& grad_output)>;

class Node {
public:
    const char* op_kind = "leaf";
    Tensor value;
    std::vector<Var> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    bool leaf = true;
};

/// Records an operation result. Raises NanError if `value` contains NaN.
Var make_op(const char* op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

/// While disabled on the current thread, operations produce constants.
bool grad_mode_enabled() noexcept;

class GradModeGuard {
public:
    explicit GradModeGuard(bool enabled);
    ~GradModeGuard();
    GradModeGuard(const GradModeGuard&) = delete;
    GradModeGuard& operator=(const GradModeGuard&) = delete;

private:
    bool previous_;
};

/// Value at `root`. Operations are evaluated eagerly, so this only reads the cache.
const Tensor& forward(const Var& root);

/// d root / d leaf for each leaf in `wrt`. With `build_graph` the results are
/// differentiable nodes. Throws GradError for a non-scalar root or a leaf
/// the root does not depend on.
std::vector<Var> grad(const Var& root, std::span<const Var> wrt, bool build_graph);
std::vector<Var> grad(const Var& root, std::initializer_list<Var> wrt, bool build_graph);

// Elementwise; operands must have identical shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double offset);
Var square(const Var& a);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var relu(const Var& a);

/// Sum of all elements, shape {1}.
Var sum(const Var& a);
/// Broadcast a single-element tensor to `shape`.
Var expand(const Var& scalar, const Shape& shape);
Var reshape(const Var& a, const Shape& shape);

/// [m,k] x [k,n] -> [m,n]
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

/// Softmax over all elements of `a`.
Var softmax(const Var& a);
/// -log softmax(logits)[label]; logits are treated as a flat vector.
Var softmax_cross_entropy(const Var& logits, std::size_t label);

struct Conv2dParams {
    std::size_t stride = 1;
    std::size_t padding = 0;
};

/// Single-image cross-correlation with symmetric zero padding.
/// input [C,H,W], weight [O,C,Kh,Kw] -> [O,Ho,Wo], Ho = (H + 2p - Kh) / s + 1.
Var conv2d(const Var& input, const Var& weight, Conv2dParams params);
/// Adjoint of conv2d with respect to its input.
Var conv2d_input_grad(const Var& grad_output, const Var& weight, const Shape& input_shape, Conv2dParams params);
/// Adjoint of conv2d with respect to its weight.
Var conv2d_weight_grad(const Var& input, const Var& grad_output, const Shape& weight_shape, Conv2dParams params);

struct GradientEntry {
    std::string name;
    Var value;
};

/// Per-parameter gradients, ordered like the owning model's parameter list.
class GradientSet {
public:
    GradientSet() = default;
    explicit GradientSet(std::vector<GradientEntry> entries) : entries_(std::move(entries)) {}

    void add(std::string name, Var value) { entries_.push_back({std::move(name), std::move(value)}); }

    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    const GradientEntry& operator[](std::size_t i) const { return entries_[i]; }
    const Tensor& tensor(std::size_t i) const { return entries_[i].value.value(); }
    const std::vector<GradientEntry>& entries() const noexcept { return entries_; }

    /// Copy with every entry detached from the tape.
    GradientSet detached() const;
    std::size_t element_count() const;

private:
    std::vector<GradientEntry> entries_;
};

/// Throws ShapeError unless both sets have the same entry count and per-entry shapes.
void check_aligned(const GradientSet& a, const GradientSet& b, const char* context);

using ScalarFunction = std::function<Var(const Var&)>;

/// Max over coordinates of |analytic - central| / max(|analytic|, |central|, 1e-12)
/// for the gradient of `function` at `point`.
double finite_diff_check(const ScalarFunction& function, const Tensor& point, double step);

}  // namespace gradleak::ad
