#include "gradleak/fedsim.hpp"

#include "gradleak/errors.hpp"

namespace gradleak::fed {

ad::GradientSet client_compute_update(const Model& model, const ClientDataset& dataset) {
    if (dataset.samples.empty()) {
        throw InvalidArgument("client_compute_update: client '" + dataset.client_id + "' has no samples");
    }
    std::vector<Tensor> totals;
    std::vector<std::string> names;
    for (const auto& sample : dataset.samples) {
        auto grads = weight_gradients(model, ad::Var::constant(sample.image), sample.label, false);
        if (totals.empty()) {
            for (std::size_t i = 0; i < grads.size(); ++i) {
                totals.push_back(grads.tensor(i));
                names.push_back(grads[i].name);
            }
            continue;
        }
        for (std::size_t i = 0; i < grads.size(); ++i) {
            auto dst = totals[i].data();
            auto src = grads.tensor(i).data();
            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
        }
    }
    ad::GradientSet out;
    const double n = static_cast<double>(dataset.samples.size());
    for (std::size_t i = 0; i < totals.size(); ++i) {
        if (dataset.samples.size() > 1) {
            for (double& v : totals[i].data()) v /= n;
        }
        out.add(names[i], ad::Var::constant(std::move(totals[i])));
    }
    return out;
}

Model server_aggregate(const Model& model, const std::vector<ClientUpdate>& updates, double alpha) {
    std::size_t total = 0;
    for (const auto& u : updates) total += u.sample_count;
    if (updates.empty() || total == 0) throw InvalidArgument("server_aggregate: no samples across client updates");

    std::vector<Tensor> weights = model.weights();
    for (const auto& u : updates) {
        if (u.gradients.size() != weights.size()) {
            throw ShapeError("server_aggregate: update has " + std::to_string(u.gradients.size()) +
                             " entries, model has " + std::to_string(weights.size()));
        }
        for (std::size_t i = 0; i < weights.size(); ++i) {
            if (u.gradients.tensor(i).shape() != weights[i].shape()) {
                throw ShapeError("server_aggregate: misaligned gradient for " + model.parameters()[i].name);
            }
        }
    }
    const double n = static_cast<double>(total);
    for (std::size_t i = 0; i < weights.size(); ++i) {
        auto w = weights[i].data();
        for (std::size_t j = 0; j < w.size(); ++j) {
            double step = 0.0;
            for (const auto& u : updates) {
                step += (static_cast<double>(u.sample_count) / n) * u.gradients.tensor(i)[j];
            }
            w[j] -= alpha * step;
        }
    }
    return model.with_weights(std::move(weights));
}

ad::GradientSet capture(const ad::GradientSet& shared) { return shared.detached(); }

}  // namespace gradleak::fed
