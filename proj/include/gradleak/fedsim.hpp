#pragma once

// Single-round FedSGD: clients report the mean loss gradient over their local
// samples and the server applies W <- W - alpha * sum_k (n_k / n) * grad_k.

#include <cstddef>
#include <string>
#include <vector>

#include "gradleak/autodiff.hpp"
#include "gradleak/model.hpp"
#include "gradleak/sample.hpp"

namespace gradleak::fed {

using gradleak::Sample;

struct ClientDataset {
    std::string client_id;
    std::vector<Sample> samples;

    std::size_t size() const noexcept { return samples.size(); }
};

struct ClientUpdate {
    ad::GradientSet gradients;
    std::size_t sample_count = 0;
};

/// Mean of the per-sample weight gradients. Detached from any graph.
ad::GradientSet client_compute_update(const Model& model, const ClientDataset& dataset);

/// New model after one aggregation step; `model` is left untouched.
Model server_aggregate(const Model& model, const std::vector<ClientUpdate>& updates, double alpha);

/// What an honest-but-curious server records from a client's update.
ad::GradientSet capture(const ad::GradientSet& shared);

}  // namespace gradleak::fed
