#include "gradleak/model.hpp"

#include <random>

#include "gradleak/errors.hpp"

namespace gradleak {

std::string to_string(Architecture arch) { return arch == Architecture::lenet ? "lenet" : "mlp"; }

Architecture parse_architecture(const std::string& name) {
    if (name == "lenet") return Architecture::lenet;
    if (name == "mlp") return Architecture::mlp;
    throw InvalidArgument("unknown architecture '" + name + "' (expected lenet or mlp)");
}

ModelSpec ModelSpec::lenet(Shape input_shape, std::size_t classes) {
    ModelSpec spec;
    spec.architecture = Architecture::lenet;
    spec.input_shape = std::move(input_shape);
    spec.classes = classes;
    return spec;
}

ModelSpec ModelSpec::mlp(Shape input_shape, std::size_t classes, std::vector<std::size_t> hidden) {
    ModelSpec spec;
    spec.architecture = Architecture::mlp;
    spec.input_shape = std::move(input_shape);
    spec.classes = classes;
    spec.hidden = std::move(hidden);
    return spec;
}

void ModelSpec::validate() const {
    if (classes < 2) throw InvalidArgument("model needs at least 2 classes");
    if (input_shape.empty()) throw InvalidArgument("model input shape is empty");
    for (auto d : input_shape) {
        if (d == 0) throw InvalidArgument("model input shape has a zero dimension");
    }
    if (architecture == Architecture::lenet) {
        if (input_shape.size() != 3) {
            throw InvalidArgument("lenet input must be [C,H,W], got " + shape_string(input_shape));
        }
        if (channels.empty() || kernel == 0 || stride == 0) throw InvalidArgument("invalid lenet layer settings");
        for (auto c : channels) {
            if (c == 0) throw InvalidArgument("lenet channel width must be >= 1");
        }
    } else {
        for (auto h : hidden) {
            if (h == 0) throw InvalidArgument("mlp hidden width must be >= 1");
        }
    }
}

namespace {

std::size_t conv_out(std::size_t n, const ModelSpec& s) {
    if (n + 2 * s.padding < s.kernel) throw InvalidArgument("lenet input too small for its kernel");
    return (n + 2 * s.padding - s.kernel) / s.stride + 1;
}

}  // namespace

std::vector<Shape> Model::parameter_shapes(const ModelSpec& spec) {
    spec.validate();
    std::vector<Shape> shapes;
    if (spec.architecture == Architecture::lenet) {
        std::size_t c = spec.input_shape[0], h = spec.input_shape[1], w = spec.input_shape[2];
        for (auto out : spec.channels) {
            shapes.push_back({out, c, spec.kernel, spec.kernel});
            c = out;
            h = conv_out(h, spec);
            w = conv_out(w, spec);
        }
        shapes.push_back({spec.classes, c * h * w});
    } else {
        std::size_t in = shape_size(spec.input_shape);
        for (auto width : spec.hidden) {
            shapes.push_back({width, in});
            in = width;
        }
        shapes.push_back({spec.classes, in});
    }
    return shapes;
}

std::vector<std::string> Model::parameter_names(const ModelSpec& spec) {
    const auto shapes = parameter_shapes(spec);
    std::vector<std::string> names;
    const std::string prefix = spec.architecture == Architecture::lenet ? "conv" : "fc";
    for (std::size_t i = 0; i + 1 < shapes.size(); ++i) names.push_back(prefix + std::to_string(i + 1) + ".weight");
    names.push_back("out.weight");
    return names;
}

Model::Model(ModelSpec spec, std::vector<Tensor> weights) : spec_(std::move(spec)) {
    const auto shapes = parameter_shapes(spec_);
    const auto names = parameter_names(spec_);
    if (weights.size() != shapes.size()) {
        throw ShapeError("model expects " + std::to_string(shapes.size()) + " parameters, got " +
                         std::to_string(weights.size()));
    }
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        if (weights[i].shape() != shapes[i]) {
            throw ShapeError("parameter " + names[i] + " expects shape " + shape_string(shapes[i]) + ", got " +
                             shape_string(weights[i].shape()));
        }
        params_.push_back({names[i], ad::Var::leaf(std::move(weights[i]), true)});
    }
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.value().size();
    return n;
}

Model Model::with_weights(std::vector<Tensor> weights) const { return Model(spec_, std::move(weights)); }

std::vector<Tensor> Model::weights() const {
    std::vector<Tensor> out;
    for (const auto& p : params_) out.push_back(p.value.value());
    return out;
}

Model init_uniform(const ModelSpec& spec, std::uint64_t seed, double low, double high) {
    if (!(low < high)) {
        throw InvalidArgument("init_uniform: invalid range [" + std::to_string(low) + ", " + std::to_string(high) + ")");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(low, high);
    std::vector<Tensor> weights;
    for (const auto& shape : Model::parameter_shapes(spec)) {
        Tensor t(shape);
        for (double& v : t.data()) v = dist(rng);
        weights.push_back(std::move(t));
    }
    return Model(spec, std::move(weights));
}

ad::Var model_forward(const Model& model, const ad::Var& image) {
    const ModelSpec& spec = model.spec();
    if (image.shape() != spec.input_shape) {
        throw ShapeError("model_forward: image shape " + shape_string(image.shape()) + " expected " +
                         shape_string(spec.input_shape));
    }
    const auto& params = model.parameters();
    ad::Var h = image;
    if (spec.architecture == Architecture::lenet) {
        const ad::Conv2dParams conv{spec.stride, spec.padding};
        for (std::size_t i = 0; i + 1 < params.size(); ++i) h = ad::sigmoid(ad::conv2d(h, params[i].value, conv));
        h = ad::reshape(h, {h.value().size(), 1});
    } else {
        h = ad::reshape(h, {h.value().size(), 1});
        for (std::size_t i = 0; i + 1 < params.size(); ++i) h = ad::sigmoid(ad::matmul(params[i].value, h));
    }
    ad::Var logits = ad::matmul(params.back().value, h);
    return ad::reshape(logits, {spec.classes});
}

ad::Var cross_entropy(const ad::Var& logits, std::size_t label) { return ad::softmax_cross_entropy(logits, label); }

ad::GradientSet weight_gradients(const Model& model, const ad::Var& image, std::size_t label, bool build_graph) {
    if (label >= model.spec().classes) {
        throw InvalidArgument("weight_gradients: label " + std::to_string(label) + " out of range");
    }
    ad::Var loss = cross_entropy(model_forward(model, image), label);
    std::vector<ad::Var> leaves;
    for (const auto& p : model.parameters()) leaves.push_back(p.value);
    auto grads = ad::grad(loss, leaves, build_graph);
    ad::GradientSet out;
    for (std::size_t i = 0; i < grads.size(); ++i) out.add(model.parameters()[i].name, std::move(grads[i]));
    return out;
}

}  // namespace gradleak
