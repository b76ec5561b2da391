#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "gradleak/autodiff.hpp"
#include "gradleak/errors.hpp"

using namespace gradleak;
using namespace gradleak::ad;

namespace {

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> dist(0.0, scale);
    Tensor t(shape);
    for (auto& v : t.data()) v = dist(rng);
    return t;
}

// Central differences computed here, independent of finite_diff_check.
std::vector<double> numeric_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h = 1e-6) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        Tensor plus = x, minus = x;
        plus.data()[i] += h;
        minus.data()[i] -= h;
        out[i] = (f(plus) - f(minus)) / (2 * h);
    }
    return out;
}

double max_rel_error(std::span<const double> a, std::span<const double> b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::abs(a[i]), std::abs(b[i]), 1e-12});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

// Checks the analytic gradient of `f` against a test-side central difference.
// Coordinates whose derivative is below `floor` are compared absolutely, since
// their relative error is dominated by rounding in f.
double check_op(const std::function<Var(const Var&)>& f, const Tensor& x) {
    const Var leaf = Var::leaf(x);
    const Var y = f(leaf);
    const auto g = grad(y, {leaf}, false)[0].value();
    const auto num = numeric_grad([&](const Tensor& p) { return f(Var::constant(p)).value().item(); }, x);
    return max_rel_error(g.data(), num);
}

// Naive direct convolution, used as the forward oracle.
Tensor naive_conv(const Tensor& in, const Tensor& w, std::size_t s, std::size_t p) {
    const auto C = in.shape()[0], H = in.shape()[1], W = in.shape()[2];
    const auto O = w.shape()[0], K = w.shape()[2], L = w.shape()[3];
    const auto Ho = (H + 2 * p - K) / s + 1, Wo = (W + 2 * p - L) / s + 1;
    Tensor out(Shape{O, Ho, Wo});
    for (std::size_t o = 0; o < O; ++o)
        for (std::size_t i = 0; i < Ho; ++i)
            for (std::size_t j = 0; j < Wo; ++j) {
                double acc = 0.0;
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t a = 0; a < K; ++a)
                        for (std::size_t b = 0; b < L; ++b) {
                            const long r = static_cast<long>(i * s + a) - static_cast<long>(p);
                            const long q = static_cast<long>(j * s + b) - static_cast<long>(p);
                            if (r < 0 || q < 0 || r >= static_cast<long>(H) || q >= static_cast<long>(W)) continue;
                            acc += in[(c * H + r) * W + q] * w[((o * C + c) * K + a) * L + b];
                        }
                out[(o * Ho + i) * Wo + j] = acc;
            }
    return out;
}

Var weighted_sum(const Var& v, const Tensor& weights) { return sum(mul(v, Var::constant(weights))); }

}  // namespace

TEST_CASE("forward examples") {
    const auto m = matmul(Var::constant(Tensor::matrix({{1, 2}, {3, 4}})), Var::constant(Tensor::matrix({{1}, {1}})));
    CHECK(m.shape() == Shape{2, 1});
    CHECK(m.value().values() == std::vector<double>{3, 7});
    CHECK(sigmoid(Var::constant(Tensor::scalar(0.0))).value().item() == 0.5);
    CHECK(forward(sum(square(Var::constant(Tensor::vector({3, 4}))))).item() == 25.0);
}

TEST_CASE("grad of sum(x^2) at 3 is 6") {
    const auto x = Var::leaf(Tensor::vector({3}));
    const auto g = grad(sum(square(x)), {x}, false);
    CHECK(g[0].value().item() == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("double backprop: ||g(x) - c||^2 with g(x) = 2x") {
    const auto x = Var::leaf(Tensor::vector({1}));
    // g(x) = d/dx (x^2) = 2x, produced by a first grad call with build_graph.
    const auto gx = grad(sum(square(x)), {x}, true)[0];
    CHECK(gx.requires_grad());
    const auto c = Var::constant(Tensor::vector({0}));
    const auto dist = sum(square(sub(gx, c)));
    const auto g = grad(dist, {x}, false);
    CHECK(g[0].value().item() == doctest::Approx(8.0).epsilon(1e-15));
}

TEST_CASE("grad without build_graph returns constants") {
    const auto x = Var::leaf(Tensor::vector({1, 2}));
    const auto g = grad(sum(square(x)), {x}, false)[0];
    CHECK_FALSE(g.requires_grad());
}

TEST_CASE("grad errors") {
    const auto x = Var::leaf(Tensor::vector({1, 2}));
    const auto y = Var::leaf(Tensor::vector({1, 2}));
    SUBCASE("non-scalar root") { CHECK_THROWS_AS(grad(square(x), {x}, false), GradError); }
    SUBCASE("unreachable leaf") { CHECK_THROWS_AS(grad(sum(square(x)), {y}, false), GradError); }
    SUBCASE("non-leaf target") {
        const auto sq = square(x);
        CHECK_THROWS_AS(grad(sum(sq), {sq}, false), GradError);
    }
    SUBCASE("constant root") { CHECK_THROWS_AS(grad(sum(Var::constant(Tensor::vector({1, 2}))), {x}, false), GradError); }
}

TEST_CASE("shape mismatch names the op") {
    const auto a = Var::constant(Tensor::vector({1, 2}));
    const auto b = Var::constant(Tensor::vector({1, 2, 3}));
    try {
        (void)add(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("add") != std::string::npos);
    }
    CHECK_THROWS_AS(matmul(Var::constant(Tensor::matrix({{1, 2}})), Var::constant(Tensor::matrix({{1, 2}}))),
                    ShapeError);
}

TEST_CASE("NaN raises immediately") {
    const auto inf = Var::constant(Tensor::vector({std::numeric_limits<double>::infinity()}));
    CHECK_THROWS_AS(sub(inf, inf), NanError);
    CHECK_THROWS_AS(mul(inf, Var::constant(Tensor::vector({0.0}))), NanError);
}

TEST_CASE("grad mode guard turns ops into constants") {
    const auto x = Var::leaf(Tensor::vector({1, 2}));
    {
        GradModeGuard off(false);
        CHECK_FALSE(grad_mode_enabled());
        CHECK_FALSE(square(x).requires_grad());
    }
    CHECK(grad_mode_enabled());
    CHECK(square(x).requires_grad());
}

TEST_CASE("tape nodes: leaves have no inputs") {
    const auto x = Var::leaf(Tensor::vector({1, 2}));
    CHECK(x.is_leaf());
    CHECK(x.node()->inputs.empty());
    const auto y = sigmoid(x);
    CHECK_FALSE(y.is_leaf());
    CHECK(std::string(y.op()) == "sigmoid");
    CHECK(y.node()->inputs.size() == 1);
    CHECK(y.detach().is_leaf());
    CHECK_FALSE(y.detach().requires_grad());
}

TEST_CASE("finite_diff_check examples") {
    const auto sq = [](const Var& x) { return sum(square(x)); };
    CHECK(finite_diff_check(sq, Tensor::vector({1, 2}), 1e-6) < 1e-7);
    const auto sig = [](const Var& x) { return sum(sigmoid(x)); };
    CHECK(finite_diff_check(sig, Tensor::vector({0.5}), 1e-6) < 1e-6);
    CHECK_THROWS(finite_diff_check(sq, Tensor::vector({1}), 0.0));
}

TEST_CASE("finite_diff_check detects a wrong gradient") {
    // A deliberately broken op: forward x^2, backward claims 3x.
    const auto broken = [](const Var& x) {
        auto v = x.value();
        for (auto& e : v.data()) e = e * e;
        return sum(make_op("broken", v, {x}, [x](const Var&, const Var& g) {
            return std::vector<Var>{mul(g, scale(x, 3.0))};
        }));
    };
    CHECK(finite_diff_check(broken, Tensor::vector({1, 2}), 1e-6) > 0.1);
}

TEST_CASE("finite_diff_check rejects non-finite values") {
    const auto blowup = [](const Var& x) { return sum(scale(square(x), 1e308)); };
    CHECK_THROWS(finite_diff_check(blowup, Tensor::vector({10}), 1e-6));
}

TEST_CASE("primitive ops match finite differences at 100 random points") {
    std::mt19937_64 rng(11);
    struct Case {
        const char* name;
        Shape shape;
        std::function<Var(const Var&)> f;
    };
    const Tensor w6 = random_tensor({6}, rng);
    const Tensor w23 = random_tensor({2, 3}, rng);
    const Tensor m34 = random_tensor({3, 4}, rng);
    const Tensor w24 = random_tensor({2, 4}, rng);
    const Tensor other6 = random_tensor({6}, rng);
    const std::vector<Case> cases = {
        {"add", {6}, [&](const Var& x) { return weighted_sum(add(x, Var::constant(other6)), w6); }},
        {"sub", {6}, [&](const Var& x) { return weighted_sum(sub(Var::constant(other6), x), w6); }},
        {"mul", {6}, [&](const Var& x) { return weighted_sum(mul(x, x), w6); }},
        {"neg", {6}, [&](const Var& x) { return weighted_sum(neg(x), w6); }},
        {"scale", {6}, [&](const Var& x) { return weighted_sum(scale(x, -2.5), w6); }},
        {"add_scalar", {6}, [&](const Var& x) { return sum(square(add_scalar(x, 0.3))); }},
        {"square", {6}, [&](const Var& x) { return weighted_sum(square(x), w6); }},
        {"sigmoid", {6}, [&](const Var& x) { return weighted_sum(sigmoid(x), w6); }},
        {"tanh", {6}, [&](const Var& x) { return weighted_sum(tanh(x), w6); }},
        {"relu", {6}, [&](const Var& x) { return weighted_sum(relu(x), w6); }},
        {"expand", {1}, [&](const Var& x) { return weighted_sum(expand(x, {6}), w6); }},
        {"reshape", {6}, [&](const Var& x) { return weighted_sum(reshape(x, {2, 3}), w23); }},
        {"transpose", {3, 2}, [&](const Var& x) { return weighted_sum(transpose(x), w23); }},
        {"matmul", {2, 3}, [&](const Var& x) { return weighted_sum(matmul(x, Var::constant(m34)), w24); }},
        {"softmax", {6}, [&](const Var& x) { return weighted_sum(softmax(x), w6); }},
        {"softmax_cross_entropy", {6}, [&](const Var& x) { return softmax_cross_entropy(x, 2); }},
    };
    for (const auto& c : cases) {
        CAPTURE(c.name);
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            Tensor x = random_tensor(c.shape, rng);
            // keep relu away from its kink
            if (std::string(c.name) == "relu") {
                for (auto& v : x.data()) v = v < 0 ? v - 0.01 : v + 0.01;
            }
            worst = std::max(worst, check_op(c.f, x));
        }
        CHECK(worst < 1e-5);
    }
}

TEST_CASE("conv2d forward matches a direct loop") {
    std::mt19937_64 rng(3);
    for (auto [s, p] : {std::pair<std::size_t, std::size_t>{1, 0}, {2, 2}, {2, 1}, {3, 0}}) {
        const Tensor in = random_tensor({2, 7, 6}, rng);
        const Tensor w = random_tensor({3, 2, 3, 3}, rng);
        const auto out = conv2d(Var::constant(in), Var::constant(w), {s, p}).value();
        const auto ref = naive_conv(in, w, s, p);
        REQUIRE(out.shape() == ref.shape());
        for (std::size_t i = 0; i < ref.size(); ++i) CHECK(out[i] == doctest::Approx(ref[i]).epsilon(1e-13));
    }
}

TEST_CASE("conv2d gradients match finite differences") {
    std::mt19937_64 rng(5);
    const Conv2dParams params{2, 2};
    const Tensor w = random_tensor({3, 2, 5, 5}, rng);
    const Tensor in = random_tensor({2, 8, 8}, rng);
    const Tensor out_w = random_tensor({3, 4, 4}, rng);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor x = random_tensor({2, 8, 8}, rng);
        const Tensor k = random_tensor({3, 2, 5, 5}, rng);
        CHECK(check_op([&](const Var& v) { return weighted_sum(conv2d(v, Var::constant(w), params), out_w); }, x) <
              1e-5);
        CHECK(check_op([&](const Var& v) { return weighted_sum(conv2d(Var::constant(in), v, params), out_w); }, k) <
              1e-5);
    }
}

TEST_CASE("conv2d adjoints are differentiable") {
    std::mt19937_64 rng(6);
    const Conv2dParams params{2, 2};
    const Shape in_shape{2, 8, 8}, w_shape{3, 2, 5, 5}, out_shape{3, 4, 4};
    const Tensor w = random_tensor(w_shape, rng);
    const Tensor go = random_tensor(out_shape, rng);
    const Tensor in = random_tensor(in_shape, rng);
    const Tensor probe_in = random_tensor(in_shape, rng);
    const Tensor probe_w = random_tensor(w_shape, rng);
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor g = random_tensor(out_shape, rng);
        const Tensor k = random_tensor(w_shape, rng);
        const Tensor x = random_tensor(in_shape, rng);
        CHECK(check_op([&](const Var& v) { return weighted_sum(conv2d_input_grad(v, Var::constant(w), in_shape, params), probe_in); }, g) < 1e-5);
        CHECK(check_op([&](const Var& v) { return weighted_sum(conv2d_input_grad(Var::constant(go), v, in_shape, params), probe_in); }, k) < 1e-5);
        CHECK(check_op([&](const Var& v) { return weighted_sum(conv2d_weight_grad(v, Var::constant(go), w_shape, params), probe_w); }, x) < 1e-5);
        CHECK(check_op([&](const Var& v) { return weighted_sum(conv2d_weight_grad(Var::constant(in), v, w_shape, params), probe_w); }, g) < 1e-5);
    }
}

namespace {

// logits = W2 sigmoid(W1 x); loss = CE(logits, label)
struct TinyMlp {
    Tensor w1, w2;
    std::size_t label;

    std::vector<Var> gradients(const Var& x, bool build) const {
        const auto a = Var::leaf(w1), b = Var::leaf(w2);
        const auto loss = softmax_cross_entropy(matmul(b, sigmoid(matmul(a, x))), label);
        return grad(loss, {a, b}, build);
    }
};

Var distance(const std::vector<Var>& g, const std::vector<Tensor>& c) {
    Var total;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto term = sum(square(sub(g[i], Var::constant(c[i]))));
        total = total.defined() ? add(total, term) : term;
    }
    return total;
}

}  // namespace

TEST_CASE("double backprop through a tiny MLP matches finite differences") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        const TinyMlp net{random_tensor({5, 4}, rng), random_tensor({3, 5}, rng), static_cast<std::size_t>(trial % 3)};
        const std::vector<Tensor> c{random_tensor({5, 4}, rng, 0.1), random_tensor({3, 5}, rng, 0.1)};
        const auto f = [&](const Var& x) { return distance(net.gradients(x, true), c); };
        const Tensor x0 = random_tensor({4, 1}, rng);
        CHECK(finite_diff_check(f, x0, 1e-6) < 1e-4);
        CHECK(check_op(f, x0) < 1e-4);
    }
}

TEST_CASE("double backprop through convolutions matches finite differences") {
    std::mt19937_64 rng(22);
    const Conv2dParams params{2, 2};
    const Tensor k = random_tensor({2, 1, 5, 5}, rng, 0.5);
    const Tensor fc = random_tensor({3, 8}, rng, 0.5);
    const std::vector<Tensor> c{random_tensor({2, 1, 5, 5}, rng, 0.01), random_tensor({3, 8}, rng, 0.01)};
    const auto f = [&](const Var& x) {
        const auto a = Var::leaf(k), b = Var::leaf(fc);
        const auto h = reshape(sigmoid(conv2d(x, a, params)), {8, 1});
        const auto loss = softmax_cross_entropy(matmul(b, h), 1);
        return distance(grad(loss, {a, b}, true), c);
    };
    CHECK(check_op(f, random_tensor({1, 4, 4}, rng)) < 1e-4);
}

TEST_CASE("linearity of grad") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor x0 = random_tensor({5}, rng);
        const Tensor wf = random_tensor({5}, rng);
        const double a = 1.7, b = -0.6;
        const auto f = [&](const Var& x) { return weighted_sum(sigmoid(x), wf); };
        const auto g = [&](const Var& x) { return sum(square(tanh(x))); };
        const auto x = Var::leaf(x0);
        const auto combined = grad(add(scale(f(x), a), scale(g(x), b)), {x}, false)[0].value();
        const auto gf = grad(f(x), {x}, false)[0].value();
        const auto gg = grad(g(x), {x}, false)[0].value();
        for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(combined[i] - (a * gf[i] + b * gg[i])) < 1e-12);
    }
}

TEST_CASE("determinism: identical graphs give bit-identical results") {
    std::mt19937_64 rng(9);
    const TinyMlp net{random_tensor({5, 4}, rng), random_tensor({3, 5}, rng), 1};
    const std::vector<Tensor> c{random_tensor({5, 4}, rng), random_tensor({3, 5}, rng)};
    const Tensor x0 = random_tensor({4, 1}, rng);
    const auto run = [&] {
        const auto x = Var::leaf(x0);
        return grad(distance(net.gradients(x, true), c), {x}, false)[0].value();
    };
    CHECK(run() == run());
}

TEST_CASE("gradients accumulate over shared subexpressions") {
    const auto x = Var::leaf(Tensor::vector({2}));
    const auto y = mul(x, x);               // x^2
    const auto z = sum(add(y, mul(y, x)));  // x^2 + x^3
    CHECK(grad(z, {x}, false)[0].value().item() == doctest::Approx(4 + 12));
}

TEST_CASE("GradientSet helpers") {
    GradientSet a;
    a.add("w", Var::leaf(Tensor::vector({1, 2})));
    a.add("v", Var::leaf(Tensor(Shape{2, 2}, 1.0)));
    CHECK(a.size() == 2);
    CHECK(a.element_count() == 6);
    const auto d = a.detached();
    CHECK_FALSE(d[0].value.requires_grad());
    CHECK(d.tensor(1) == a.tensor(1));
    CHECK_NOTHROW(check_aligned(a, d, "test"));
    GradientSet b;
    b.add("w", Var::leaf(Tensor::vector({1, 2})));
    CHECK_THROWS_AS(check_aligned(a, b, "test"), ShapeError);
    b.add("v", Var::leaf(Tensor(Shape{4}, 1.0)));
    CHECK_THROWS_AS(check_aligned(a, b, "test"), ShapeError);
}
