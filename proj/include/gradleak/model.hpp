#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "gradleak/autodiff.hpp"
#include "gradleak/tensor.hpp"

namespace gradleak {

enum class Architecture { lenet, mlp };

std::string to_string(Architecture arch);
Architecture parse_architecture(const std::string& name);

/// Network description. Images are channel-planar tensors of shape [C,H,W].
struct ModelSpec {
    Architecture architecture = Architecture::mlp;
    Shape input_shape{1, 8, 8};
    std::size_t classes = 10;

    // lenet: one bias-free sigmoid convolution per entry of `channels`.
    std::vector<std::size_t> channels{12, 12, 12, 12};
    std::size_t kernel = 5;
    std::size_t stride = 2;
    std::size_t padding = 2;

    // mlp: one bias-free sigmoid layer per entry of `hidden`.
    std::vector<std::size_t> hidden{256};

    /// Four stride-2 5x5 convolutions with 12 channels, then a linear layer to `classes` logits.
    static ModelSpec lenet(Shape input_shape, std::size_t classes = 10);
    /// input -> 256 -> classes by default.
    static ModelSpec mlp(Shape input_shape, std::size_t classes = 10, std::vector<std::size_t> hidden = {256});

    void validate() const;
};

struct Parameter {
    std::string name;
    ad::Var value;  // leaf requiring grad
};

/// Parameters are immutable after construction; a Model may be shared read-only across threads.
class Model {
public:
    Model(ModelSpec spec, std::vector<Tensor> weights);

    const ModelSpec& spec() const noexcept { return spec_; }
    const std::vector<Parameter>& parameters() const noexcept { return params_; }
    std::size_t parameter_count() const;
    /// Index of the output layer weight W_l with shape [classes, features].
    std::size_t output_layer_index() const noexcept { return params_.size() - 1; }

    /// Expected parameter shapes for `spec`, in parameter order.
    static std::vector<Shape> parameter_shapes(const ModelSpec& spec);
    static std::vector<std::string> parameter_names(const ModelSpec& spec);

    /// Same architecture with new weight values.
    Model with_weights(std::vector<Tensor> weights) const;
    std::vector<Tensor> weights() const;

private:
    ModelSpec spec_;
    std::vector<Parameter> params_;
};

/// Every parameter element drawn i.i.d. from uniform[low, high) by a generator seeded with `seed`.
Model init_uniform(const ModelSpec& spec, std::uint64_t seed, double low = -0.5, double high = 0.5);

/// Length-`classes` logits as a graph node.
ad::Var model_forward(const Model& model, const ad::Var& image);

/// -log softmax(logits)[label]
ad::Var cross_entropy(const ad::Var& logits, std::size_t label);

/// d cross_entropy(model(image), label) / dW, aligned with model.parameters().
/// With `build_graph` every entry stays differentiable (e.g. with respect to `image`).
ad::GradientSet weight_gradients(const Model& model, const ad::Var& image, std::size_t label, bool build_graph);

}  // namespace gradleak
