#include "gradleak/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <utility>

#include "gradleak/errors.hpp"

namespace gradleak::ad {

namespace {

thread_local bool t_grad_mode = true;

const Tensor& checked_value(const std::shared_ptr<Node>& node) {
    if (!node) throw GradError("use of an undefined Var");
    return node->value;
}

void require_same_shape(const char* op, const Var& a, const Var& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
    }
}

template <typename F>
Tensor map_unary(const Tensor& a, F&& f) {
    Tensor out(a.shape());
    auto src = a.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
    return out;
}

template <typename F>
Tensor map_binary(const Tensor& a, const Tensor& b, F&& f) {
    Tensor out(a.shape());
    auto x = a.data();
    auto y = b.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < x.size(); ++i) dst[i] = f(x[i], y[i]);
    return out;
}

struct ConvGeometry {
    std::size_t channels, height, width;
    std::size_t out_channels, kernel_h, kernel_w;
    std::size_t out_h, out_w;
    std::size_t stride, padding;
};

ConvGeometry conv_geometry(const char* op, const Shape& input, const Shape& weight, Conv2dParams p) {
    if (input.size() != 3) throw ShapeError(std::string(op) + ": input must be [C,H,W], got " + shape_string(input));
    if (weight.size() != 4) {
        throw ShapeError(std::string(op) + ": weight must be [O,C,Kh,Kw], got " + shape_string(weight));
    }
    if (weight[1] != input[0]) {
        throw ShapeError(std::string(op) + ": weight channels " + std::to_string(weight[1]) +
                         " do not match input channels " + std::to_string(input[0]));
    }
    if (p.stride == 0) throw ShapeError(std::string(op) + ": stride must be >= 1");
    const std::size_t padded_h = input[1] + 2 * p.padding;
    const std::size_t padded_w = input[2] + 2 * p.padding;
    if (padded_h < weight[2] || padded_w < weight[3]) {
        throw ShapeError(std::string(op) + ": kernel " + shape_string(weight) + " larger than padded input " +
                         shape_string(input));
    }
    return {input[0],
            input[1],
            input[2],
            weight[0],
            weight[2],
            weight[3],
            (padded_h - weight[2]) / p.stride + 1,
            (padded_w - weight[3]) / p.stride + 1,
            p.stride,
            p.padding};
}

// Output indices [lo, hi) for which out * stride + offset lands inside [0, extent).
std::pair<std::size_t, std::size_t> valid_range(std::size_t out_extent, std::size_t extent, std::ptrdiff_t offset,
                                                std::size_t stride) {
    const auto s = static_cast<std::ptrdiff_t>(stride);
    std::ptrdiff_t lo = 0;
    if (offset < 0) lo = (-offset + s - 1) / s;
    std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(extent) - 1 - offset;
    hi = hi < 0 ? 0 : hi / s + 1;
    hi = std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(out_extent));
    if (lo >= hi) return {0, 0};
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// Visits every (output, weight, input) index triple of the cross-correlation once.
template <typename F>
void for_each_tap(const ConvGeometry& g, F&& f) {
    const auto pad = static_cast<std::ptrdiff_t>(g.padding);
    for (std::size_t o = 0; o < g.out_channels; ++o) {
        for (std::size_t c = 0; c < g.channels; ++c) {
            for (std::size_t p = 0; p < g.kernel_h; ++p) {
                const auto off_h = static_cast<std::ptrdiff_t>(p) - pad;
                const auto [i_lo, i_hi] = valid_range(g.out_h, g.height, off_h, g.stride);
                for (std::size_t q = 0; q < g.kernel_w; ++q) {
                    const auto off_w = static_cast<std::ptrdiff_t>(q) - pad;
                    const auto [j_lo, j_hi] = valid_range(g.out_w, g.width, off_w, g.stride);
                    if (i_lo >= i_hi || j_lo >= j_hi) continue;
                    const std::size_t w_idx = ((o * g.channels + c) * g.kernel_h + p) * g.kernel_w + q;
                    f(o, c, w_idx, i_lo, i_hi, j_lo, j_hi, off_h, off_w);
                }
            }
        }
    }
}

Tensor conv_forward(const Tensor& x, const Tensor& w, const ConvGeometry& g) {
    Tensor y({g.out_channels, g.out_h, g.out_w});
    const double* xd = x.data().data();
    const double* wd = w.data().data();
    double* yd = y.data().data();
    for_each_tap(g, [&](std::size_t o, std::size_t c, std::size_t w_idx, std::size_t i_lo, std::size_t i_hi,
                        std::size_t j_lo, std::size_t j_hi, std::ptrdiff_t off_h, std::ptrdiff_t off_w) {
        const double wv = wd[w_idx];
        for (std::size_t i = i_lo; i < i_hi; ++i) {
            const auto h = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(i * g.stride) + off_h);
            const double* xrow = xd + (c * g.height + h) * g.width;
            double* yrow = yd + (o * g.out_h + i) * g.out_w;
            for (std::size_t j = j_lo; j < j_hi; ++j) {
                yrow[j] += wv * xrow[static_cast<std::ptrdiff_t>(j * g.stride) + off_w];
            }
        }
    });
    return y;
}

Tensor conv_input_adjoint(const Tensor& gy, const Tensor& w, const ConvGeometry& g) {
    Tensor gx({g.channels, g.height, g.width});
    const double* gyd = gy.data().data();
    const double* wd = w.data().data();
    double* gxd = gx.data().data();
    for_each_tap(g, [&](std::size_t o, std::size_t c, std::size_t w_idx, std::size_t i_lo, std::size_t i_hi,
                        std::size_t j_lo, std::size_t j_hi, std::ptrdiff_t off_h, std::ptrdiff_t off_w) {
        const double wv = wd[w_idx];
        for (std::size_t i = i_lo; i < i_hi; ++i) {
            const auto h = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(i * g.stride) + off_h);
            double* xrow = gxd + (c * g.height + h) * g.width;
            const double* yrow = gyd + (o * g.out_h + i) * g.out_w;
            for (std::size_t j = j_lo; j < j_hi; ++j) {
                xrow[static_cast<std::ptrdiff_t>(j * g.stride) + off_w] += wv * yrow[j];
            }
        }
    });
    return gx;
}

Tensor conv_weight_adjoint(const Tensor& x, const Tensor& gy, const ConvGeometry& g) {
    Tensor gw({g.out_channels, g.channels, g.kernel_h, g.kernel_w});
    const double* xd = x.data().data();
    const double* gyd = gy.data().data();
    double* gwd = gw.data().data();
    for_each_tap(g, [&](std::size_t o, std::size_t c, std::size_t w_idx, std::size_t i_lo, std::size_t i_hi,
                        std::size_t j_lo, std::size_t j_hi, std::ptrdiff_t off_h, std::ptrdiff_t off_w) {
        double acc = 0.0;
        for (std::size_t i = i_lo; i < i_hi; ++i) {
            const auto h = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(i * g.stride) + off_h);
            const double* xrow = xd + (c * g.height + h) * g.width;
            const double* yrow = gyd + (o * g.out_h + i) * g.out_w;
            for (std::size_t j = j_lo; j < j_hi; ++j) {
                acc += yrow[j] * xrow[static_cast<std::ptrdiff_t>(j * g.stride) + off_w];
            }
        }
        gwd[w_idx] = acc;
    });
    return gw;
}

void require_output_shape(const char* op, const Shape& got, const ConvGeometry& g) {
    const Shape want{g.out_channels, g.out_h, g.out_w};
    if (got != want) {
        throw ShapeError(std::string(op) + ": grad_output shape " + shape_string(got) + " expected " +
                         shape_string(want));
    }
}

Tensor softmax_values(const Tensor& a) {
    const auto src = a.data();
    const double top = *std::max_element(src.begin(), src.end());
    Tensor out(a.shape());
    auto dst = out.data();
    double total = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i) {
        dst[i] = std::exp(src[i] - top);
        total += dst[i];
    }
    for (double& v : dst) v /= total;
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Var / tape

Var Var::leaf(Tensor value, bool requires_grad) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    if (node->value.has_nan()) throw NanError("leaf: value contains NaN");
    return Var(std::move(node));
}

Var Var::constant(Tensor value) { return leaf(std::move(value), false); }

const Tensor& Var::value() const { return checked_value(node_); }

bool Var::requires_grad() const { return node_ && node_->requires_grad; }

bool Var::is_leaf() const { return node_ && node_->leaf; }

const char* Var::op() const { return node_ ? node_->op_kind : "undefined"; }

Var Var::detach() const { return constant(value()); }

Var make_op(const char* op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
    if (value.has_nan()) throw NanError(std::string(op) + ": produced NaN");
    auto node = std::make_shared<Node>();
    node->op_kind = op;
    node->value = std::move(value);
    node->leaf = false;
    if (t_grad_mode) {
        const bool any = std::any_of(inputs.begin(), inputs.end(), [](const Var& v) { return v.requires_grad(); });
        if (any) {
            node->requires_grad = true;
            node->inputs = std::move(inputs);
            node->backward = std::move(backward);
        }
    }
    return Var(std::move(node));
}

bool grad_mode_enabled() noexcept { return t_grad_mode; }

GradModeGuard::GradModeGuard(bool enabled) : previous_(t_grad_mode) { t_grad_mode = enabled; }

GradModeGuard::~GradModeGuard() { t_grad_mode = previous_; }

const Tensor& forward(const Var& root) { return root.value(); }

std::vector<Var> grad(const Var& root, std::span<const Var> wrt, bool build_graph) {
    if (!root.defined()) throw GradError("grad: undefined root");
    if (root.value().size() != 1) {
        throw GradError("grad: root must be a scalar, got shape " + shape_string(root.shape()));
    }

    // Iterative post-order DFS over nodes that require a gradient.
    std::vector<std::shared_ptr<Node>> order;
    std::unordered_map<const Node*, std::size_t> index;
    if (root.requires_grad()) {
        std::vector<std::pair<std::shared_ptr<Node>, std::size_t>> stack;
        stack.emplace_back(root.node_, 0);
        index.emplace(root.node_.get(), SIZE_MAX);
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next < node->inputs.size()) {
                const auto& child = node->inputs[next++].node_;
                if (child && child->requires_grad && index.find(child.get()) == index.end()) {
                    index.emplace(child.get(), SIZE_MAX);
                    stack.emplace_back(child, 0);
                }
            } else {
                index[node.get()] = order.size();
                order.push_back(node);
                stack.pop_back();
            }
        }
    }

    for (std::size_t k = 0; k < wrt.size(); ++k) {
        const Var& leaf = wrt[k];
        if (!leaf.defined() || !leaf.is_leaf()) throw GradError("grad: wrt[" + std::to_string(k) + "] is not a leaf");
        if (index.find(leaf.node()) == index.end()) {
            throw GradError("grad: wrt[" + std::to_string(k) + "] is unreachable from the root");
        }
    }

    GradModeGuard mode(build_graph);
    std::vector<Var> grads(order.size());
    grads.back() = Var::constant(Tensor(root.shape(), 1.0));
    for (std::size_t pos = order.size(); pos-- > 0;) {
        const auto& node = order[pos];
        if (node->leaf || !grads[pos].defined()) continue;
        const Var self(node);
        std::vector<Var> parent_grads = node->backward(self, grads[pos]);
        for (std::size_t i = 0; i < node->inputs.size(); ++i) {
            const Var& input = node->inputs[i];
            if (!input.requires_grad() || i >= parent_grads.size() || !parent_grads[i].defined()) continue;
            const std::size_t at = index.at(input.node());
            grads[at] = grads[at].defined() ? add(grads[at], parent_grads[i]) : parent_grads[i];
        }
        // Intermediate gradients are no longer needed once propagated.
        grads[pos] = Var();
    }

    std::vector<Var> out;
    out.reserve(wrt.size());
    for (const Var& leaf : wrt) {
        const std::size_t at = index.at(leaf.node());
        if (!grads[at].defined()) throw GradError("grad: no gradient reached a requested leaf");
        out.push_back(grads[at]);
    }
    return out;
}

std::vector<Var> grad(const Var& root, std::initializer_list<Var> wrt, bool build_graph) {
    return grad(root, std::span<const Var>(wrt.begin(), wrt.size()), build_graph);
}

// ---------------------------------------------------------------------------
// Elementwise

Var add(const Var& a, const Var& b) {
    require_same_shape("add", a, b);
    return make_op("add", map_binary(a.value(), b.value(), [](double x, double y) { return x + y; }), {a, b},
                   [](const Var&, const Var& g) { return std::vector<Var>{g, g}; });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape("sub", a, b);
    return make_op("sub", map_binary(a.value(), b.value(), [](double x, double y) { return x - y; }), {a, b},
                   [b](const Var&, const Var& g) {
                       return std::vector<Var>{g, b.requires_grad() ? neg(g) : Var()};
                   });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape("mul", a, b);
    return make_op("mul", map_binary(a.value(), b.value(), [](double x, double y) { return x * y; }), {a, b},
                   [a, b](const Var&, const Var& g) {
                       return std::vector<Var>{a.requires_grad() ? mul(g, b) : Var(),
                                               b.requires_grad() ? mul(g, a) : Var()};
                   });
}

Var neg(const Var& a) {
    return make_op("neg", map_unary(a.value(), [](double x) { return -x; }), {a},
                   [](const Var&, const Var& g) { return std::vector<Var>{neg(g)}; });
}

Var scale(const Var& a, double factor) {
    return make_op("scale", map_unary(a.value(), [factor](double x) { return x * factor; }), {a},
                   [factor](const Var&, const Var& g) { return std::vector<Var>{scale(g, factor)}; });
}

Var add_scalar(const Var& a, double offset) {
    return make_op("add_scalar", map_unary(a.value(), [offset](double x) { return x + offset; }), {a},
                   [](const Var&, const Var& g) { return std::vector<Var>{g}; });
}

Var square(const Var& a) {
    return make_op("square", map_unary(a.value(), [](double x) { return x * x; }), {a},
                   [a](const Var&, const Var& g) { return std::vector<Var>{mul(g, scale(a, 2.0))}; });
}

Var sigmoid(const Var& a) {
    return make_op("sigmoid", map_unary(a.value(), [](double x) { return 1.0 / (1.0 + std::exp(-x)); }), {a},
                   [](const Var& y, const Var& g) {
                       return std::vector<Var>{mul(g, mul(y, add_scalar(neg(y), 1.0)))};
                   });
}

Var tanh(const Var& a) {
    return make_op("tanh", map_unary(a.value(), [](double x) { return std::tanh(x); }), {a},
                   [](const Var& y, const Var& g) {
                       return std::vector<Var>{mul(g, add_scalar(neg(square(y)), 1.0))};
                   });
}

Var relu(const Var& a) {
    return make_op("relu", map_unary(a.value(), [](double x) { return x > 0.0 ? x : 0.0; }), {a},
                   [a](const Var&, const Var& g) {
                       // The step function has zero derivative almost everywhere.
                       auto mask = Var::constant(map_unary(a.value(), [](double x) { return x > 0.0 ? 1.0 : 0.0; }));
                       return std::vector<Var>{mul(g, mask)};
                   });
}

// ---------------------------------------------------------------------------
// Reductions and shape

Var sum(const Var& a) {
    double total = 0.0;
    for (double v : a.value().data()) total += v;
    Shape shape = a.shape();
    return make_op("sum", Tensor::scalar(total), {a},
                   [shape](const Var&, const Var& g) { return std::vector<Var>{expand(g, shape)}; });
}

Var expand(const Var& scalar, const Shape& shape) {
    if (scalar.value().size() != 1) {
        throw ShapeError("expand: source must have one element, got " + shape_string(scalar.shape()));
    }
    return make_op("expand", Tensor(shape, scalar.value()[0]), {scalar},
                   [src = scalar.shape()](const Var&, const Var& g) {
                       return std::vector<Var>{reshape(sum(g), src)};
                   });
}

Var reshape(const Var& a, const Shape& shape) {
    if (shape_size(shape) != a.value().size()) {
        throw ShapeError("reshape: cannot view " + shape_string(a.shape()) + " as " + shape_string(shape));
    }
    if (a.shape() == shape) return a;
    return make_op("reshape", a.value().reshaped(shape), {a}, [src = a.shape()](const Var&, const Var& g) {
        return std::vector<Var>{reshape(g, src)};
    });
}

Var matmul(const Var& a, const Var& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) {
        throw ShapeError("matmul: incompatible shapes " + shape_string(sa) + " and " + shape_string(sb));
    }
    const std::size_t m = sa[0], k = sa[1], n = sb[1];
    Tensor out({m, n});
    const double* ad = a.value().data().data();
    const double* bd = b.value().data().data();
    double* od = out.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ad[i * k + p];
            const double* brow = bd + p * n;
            double* orow = od + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return make_op("matmul", std::move(out), {a, b}, [a, b](const Var&, const Var& g) {
        return std::vector<Var>{a.requires_grad() ? matmul(g, transpose(b)) : Var(),
                                b.requires_grad() ? matmul(transpose(a), g) : Var()};
    });
}

Var transpose(const Var& a) {
    const Shape& s = a.shape();
    if (s.size() != 2) throw ShapeError("transpose: expected a matrix, got " + shape_string(s));
    const std::size_t rows = s[0], cols = s[1];
    Tensor out({cols, rows});
    const auto src = a.value().data();
    auto dst = out.data();
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) dst[j * rows + i] = src[i * cols + j];
    }
    return make_op("transpose", std::move(out), {a},
                   [](const Var&, const Var& g) { return std::vector<Var>{transpose(g)}; });
}

Var softmax(const Var& a) {
    return make_op("softmax", softmax_values(a.value()), {a}, [](const Var& s, const Var& g) {
        // ds = s * (g - <g, s>)
        Var inner = sum(mul(g, s));
        return std::vector<Var>{mul(s, sub(g, expand(inner, s.shape())))};
    });
}

Var softmax_cross_entropy(const Var& logits, std::size_t label) {
    const auto z = logits.value().data();
    if (label >= z.size()) {
        throw InvalidArgument("softmax_cross_entropy: label " + std::to_string(label) + " out of range for " +
                              std::to_string(z.size()) + " logits");
    }
    const double top = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (double v : z) total += std::exp(v - top);
    const double loss = top + std::log(total) - z[label];
    return make_op("softmax_cross_entropy", Tensor::scalar(loss), {logits},
                   [logits, label](const Var&, const Var& g) {
                       Tensor one_hot(logits.shape());
                       one_hot[label] = 1.0;
                       Var delta = sub(softmax(logits), Var::constant(std::move(one_hot)));
                       return std::vector<Var>{mul(expand(g, logits.shape()), delta)};
                   });
}

// ---------------------------------------------------------------------------
// Convolution
//
// The three operators form a closed family under differentiation:
//   y  = conv(x, w)          dx = input_grad(gy, w),  dw = weight_grad(x, gy)
//   gx = input_grad(gy, w)   dgy = conv(d, w),         dw = weight_grad(d, gy)
//   gw = weight_grad(x, gy)  dx = input_grad(gy, d),   dgy = conv(x, d)

Var conv2d(const Var& input, const Var& weight, Conv2dParams params) {
    const ConvGeometry g = conv_geometry("conv2d", input.shape(), weight.shape(), params);
    return make_op("conv2d", conv_forward(input.value(), weight.value(), g), {input, weight},
                   [input, weight, params](const Var&, const Var& gy) {
                       return std::vector<Var>{
                           input.requires_grad() ? conv2d_input_grad(gy, weight, input.shape(), params) : Var(),
                           weight.requires_grad() ? conv2d_weight_grad(input, gy, weight.shape(), params) : Var()};
                   });
}

Var conv2d_input_grad(const Var& grad_output, const Var& weight, const Shape& input_shape, Conv2dParams params) {
    const ConvGeometry g = conv_geometry("conv2d_input_grad", input_shape, weight.shape(), params);
    require_output_shape("conv2d_input_grad", grad_output.shape(), g);
    return make_op("conv2d_input_grad", conv_input_adjoint(grad_output.value(), weight.value(), g),
                   {grad_output, weight}, [grad_output, weight, params](const Var&, const Var& d) {
                       return std::vector<Var>{
                           grad_output.requires_grad() ? conv2d(d, weight, params) : Var(),
                           weight.requires_grad() ? conv2d_weight_grad(d, grad_output, weight.shape(), params)
                                                  : Var()};
                   });
}

Var conv2d_weight_grad(const Var& input, const Var& grad_output, const Shape& weight_shape, Conv2dParams params) {
    const ConvGeometry g = conv_geometry("conv2d_weight_grad", input.shape(), weight_shape, params);
    require_output_shape("conv2d_weight_grad", grad_output.shape(), g);
    return make_op("conv2d_weight_grad", conv_weight_adjoint(input.value(), grad_output.value(), g),
                   {input, grad_output}, [input, grad_output, params](const Var&, const Var& d) {
                       return std::vector<Var>{
                           input.requires_grad() ? conv2d_input_grad(grad_output, d, input.shape(), params) : Var(),
                           grad_output.requires_grad() ? conv2d(input, d, params) : Var()};
                   });
}

// ---------------------------------------------------------------------------
// GradientSet

GradientSet GradientSet::detached() const {
    GradientSet out;
    for (const auto& e : entries_) out.add(e.name, e.value.detach());
    return out;
}

std::size_t GradientSet::element_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.value().size();
    return n;
}

void check_aligned(const GradientSet& a, const GradientSet& b, const char* context) {
    if (a.size() != b.size()) {
        throw ShapeError(std::string(context) + ": gradient sets have " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()) + " entries");
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a.tensor(i).shape() != b.tensor(i).shape()) {
            throw ShapeError(std::string(context) + ": entry " + std::to_string(i) + " (" + a[i].name +
                             ") has shape " + shape_string(a.tensor(i).shape()) + " vs " +
                             shape_string(b.tensor(i).shape()));
        }
    }
}

// ---------------------------------------------------------------------------

double finite_diff_check(const ScalarFunction& function, const Tensor& point, double step) {
    if (!(step > 0.0)) throw InvalidArgument("finite_diff_check: step must be positive");

    auto evaluate = [&](const Tensor& at) {
        Var y = function(Var::leaf(at, true));
        if (y.value().size() != 1) throw GradError("finite_diff_check: function is not scalar-valued");
        const double v = y.value()[0];
        if (!std::isfinite(v)) throw NanError("finite_diff_check: non-finite function value");
        return v;
    };

    Var x = Var::leaf(point, true);
    Var y = function(x);
    if (!std::isfinite(y.value().item())) throw NanError("finite_diff_check: non-finite function value");
    const Tensor analytic = grad(y, {x}, false)[0].value();

    double worst = 0.0;
    Tensor probe = point;
    for (std::size_t i = 0; i < point.size(); ++i) {
        const double original = probe[i];
        probe[i] = original + step;
        const double up = evaluate(probe);
        probe[i] = original - step;
        const double down = evaluate(probe);
        probe[i] = original;
        const double central = (up - down) / (2.0 * step);
        const double denom = std::max({std::abs(analytic[i]), std::abs(central), 1e-12});
        worst = std::max(worst, std::abs(analytic[i] - central) / denom);
    }
    return worst;
}

}  // namespace gradleak::ad
