#pragma once

// Gradient-matching reconstruction of a private sample from its shared weight gradient.
//
// The label is read off the output-layer gradient, then a Gaussian dummy image
// is optimised so that the gradient it induces matches the observed one.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gradleak/autodiff.hpp"
#include "gradleak/model.hpp"
#include "gradleak/stop_control.hpp"

namespace gradleak::attack {

enum class OptimizerKind { sgd, lbfgs };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string& name);

struct LbfgsOptions {
    /// Quasi-Newton updates per attack iteration (the optimizer-step granularity of
    /// common deep-learning L-BFGS implementations). The monitored loss is the one
    /// at the start of the attack iteration.
    std::size_t inner_iterations = 20;
    std::size_t history = 10;
    std::size_t max_line_search_evals = 20;
    double armijo = 1e-4;
    double backtrack = 0.5;
    double curvature_epsilon = 1e-10;
    /// Fallback displacement length, as a fraction of the learning rate.
    double fallback_fraction = 1e-3;
};

struct AttackConfig {
    std::size_t max_iterations = 300;
    double learning_rate = 1.0;
    OptimizerKind optimizer = OptimizerKind::lbfgs;
    std::uint64_t dummy_seed = 0;
    LbfgsOptions lbfgs;

    void validate() const;
};

/// Builds the scalar distance loss at `dummy` and reports the dummy gradients it matched.
/// The returned node must be differentiable with respect to `dummy`.
using LossBuilder = std::function<ad::Var(const ad::Var& dummy, ad::GradientSet& dummy_grads)>;

struct CurvaturePair {
    std::vector<double> s;
    std::vector<double> y;
    double rho = 0.0;  // 1 / (s.y)
};

struct LbfgsMemory {
    std::deque<CurvaturePair> pairs;
    // Loss and gradient at the current dummy, carried over from the accepted line-search point.
    std::optional<double> loss;
    std::vector<double> gradient;
    ad::GradientSet dummy_grads;
};

struct Diagnostics {
    std::size_t line_search_failures = 0;
    std::size_t loss_evaluations = 0;
    std::size_t gradient_evaluations = 0;
};

struct AttackState {
    Tensor dummy;
    std::size_t label = 0;
    ad::GradientSet dummy_grads;  // detached, computed at the pre-update dummy
    double loss = 0.0;            // distance at the pre-update dummy
    std::size_t iteration = 0;
    LbfgsMemory memory;
    Diagnostics diagnostics;
};

struct AttackResult {
    Tensor reconstruction;
    std::size_t label = 0;
    std::size_t iterations = 0;
    std::vector<double> loss_history;
    double seconds = 0.0;
    stop::StopCause cause = stop::StopCause::none;
    Diagnostics diagnostics;
    std::string error;
};

/// Raised when an attack aborts mid-run; carries everything recorded up to the failure.
class AttackError : public std::runtime_error {
public:
    AttackError(const std::string& what, AttackResult partial)
        : std::runtime_error(what), partial_(std::move(partial)) {}
    const AttackResult& partial() const noexcept { return partial_; }

private:
    AttackResult partial_;
};

/// Label whose output-layer gradient row has a non-positive dot product with
/// every other row. When that does not single out one row, the row with the
/// smallest sum among the candidates (or among all rows) wins. The output layer
/// is the last entry of `grads` and has one row per class.
std::size_t infer_label(const ad::GradientSet& grads);

/// i.i.d. standard normal entries from a generator seeded with `seed`.
Tensor init_dummy(const Shape& shape, std::uint64_t seed);

/// Sum over all entries of the squared differences.
ad::Var gradient_distance(const ad::GradientSet& dummy, const ad::GradientSet& target);

/// Distance between the weight gradients induced by (dummy, label) and `target`.
LossBuilder gradient_matching_loss(const Model& model, std::size_t label, const ad::GradientSet& target);

/// dummy <- dummy - eta * dDist/ddummy; records the pre-update distance.
AttackState attack_step_sgd(AttackState state, const LossBuilder& loss, double eta);
AttackState attack_step_sgd(AttackState state, const Model& model, const ad::GradientSet& target, double eta);

/// -H g from the two-loop recursion; with no stored pairs, -g * min(1, 1/|g|_1).
std::vector<double> lbfgs_direction(const std::vector<double>& gradient, const std::deque<CurvaturePair>& pairs);

/// One attack iteration: `options.inner_iterations` L-BFGS updates, each with a
/// backtracking Armijo line search starting at step `eta`. Curvature pairs are
/// kept only when s.y exceeds `options.curvature_epsilon`. When the line search
/// exhausts its evaluations the update falls back to a steepest-descent move of
/// length eta * fallback_fraction.
AttackState attack_step_lbfgs(AttackState state, const LossBuilder& loss, double eta, const LbfgsOptions& options);
AttackState attack_step_lbfgs(AttackState state, const Model& model, const ad::GradientSet& target, double eta,
                              const LbfgsOptions& options);

/// Label inference followed by up to `config.max_iterations` optimisation steps,
/// each loss fed to `controller`. Throws AttackError with the partial result on failure.
AttackResult run_attack(const Model& model, const ad::GradientSet& target, const AttackConfig& config,
                        stop::StopController& controller);

}  // namespace gradleak::attack
