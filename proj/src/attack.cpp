#include "gradleak/attack.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "gradleak/errors.hpp"

namespace gradleak::attack {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "lbfgs"; }

OptimizerKind parse_optimizer(const std::string& name) {
    if (name == "sgd") return OptimizerKind::sgd;
    if (name == "lbfgs") return OptimizerKind::lbfgs;
    throw InvalidArgument("unknown optimizer '" + name + "' (expected sgd or lbfgs)");
}

void AttackConfig::validate() const {
    if (max_iterations < 1) throw InvalidArgument("max_iterations must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw InvalidArgument("attack learning rate must be > 0");
    }
    if (optimizer == OptimizerKind::lbfgs) {
        if (lbfgs.history < 1) throw InvalidArgument("lbfgs history must be >= 1");
        if (lbfgs.inner_iterations < 1) throw InvalidArgument("lbfgs inner iterations must be >= 1");
        if (lbfgs.max_line_search_evals < 1) throw InvalidArgument("lbfgs max line-search evals must be >= 1");
        if (!(lbfgs.backtrack > 0.0 && lbfgs.backtrack < 1.0)) throw InvalidArgument("lbfgs backtrack must be in (0,1)");
        if (!(lbfgs.armijo > 0.0 && lbfgs.armijo < 1.0)) throw InvalidArgument("lbfgs armijo constant must be in (0,1)");
    }
}

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double dot(std::span<const double> a, std::span<const double> b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

struct Evaluation {
    ad::Var dummy;
    ad::Var distance;
    ad::GradientSet dummy_grads;

    double loss() const { return distance.value().item(); }
};

Evaluation evaluate(const LossBuilder& builder, const Tensor& at) {
    Evaluation e;
    e.dummy = ad::Var::leaf(at, true);
    e.distance = builder(e.dummy, e.dummy_grads);
    if (e.distance.value().size() != 1) throw ShapeError("distance loss must be a scalar");
    return e;
}

std::vector<double> gradient_of(const Evaluation& e) {
    const Tensor g = ad::grad(e.distance, {e.dummy}, false)[0].value();
    if (!g.all_finite()) throw NanError("non-finite gradient of the distance loss");
    return g.values();
}

Tensor moved(const Tensor& x, const std::vector<double>& direction, double t) {
    Tensor out = x;
    auto d = out.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += t * direction[i];
    return out;
}

}  // namespace

std::size_t infer_label(const ad::GradientSet& grads) {
    if (grads.empty()) throw InvalidArgument("infer_label: empty gradient set");
    const Tensor& out = grads.tensor(grads.size() - 1);
    const std::size_t rows = out.shape()[0];
    const std::size_t cols = out.size() / rows;
    if (rows < 2) throw InvalidArgument("infer_label: output layer needs at least two rows");

    bool all_zero = true;
    for (double v : out.data()) all_zero = all_zero && v == 0.0;
    if (all_zero) throw InvalidArgument("infer_label: degenerate all-zero output-layer gradient");

    auto row = [&](std::size_t i) { return out.data().subspan(i * cols, cols); };

    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < rows; ++i) {
        bool opposed = true;
        for (std::size_t j = 0; j < rows && opposed; ++j) {
            if (j != i && dot(row(i), row(j)) > 0.0) opposed = false;
        }
        if (opposed) candidates.push_back(i);
    }
    if (candidates.size() == 1) return candidates.front();

    if (candidates.empty()) {
        candidates.resize(rows);
        std::iota(candidates.begin(), candidates.end(), std::size_t{0});
    }
    std::size_t best = candidates.front();
    double best_sum = std::numeric_limits<double>::infinity();
    for (auto i : candidates) {
        const auto r = row(i);
        const double s = std::accumulate(r.begin(), r.end(), 0.0);
        if (s < best_sum) {
            best_sum = s;
            best = i;
        }
    }
    return best;
}

Tensor init_dummy(const Shape& shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    Tensor t(shape);
    for (double& v : t.data()) v = dist(rng);
    return t;
}

ad::Var gradient_distance(const ad::GradientSet& dummy, const ad::GradientSet& target) {
    ad::check_aligned(dummy, target, "gradient_distance");
    if (dummy.empty()) throw InvalidArgument("gradient_distance: empty gradient sets");
    ad::Var total;
    for (std::size_t i = 0; i < dummy.size(); ++i) {
        ad::Var term = ad::sum(ad::square(ad::sub(dummy[i].value, target[i].value)));
        total = total.defined() ? ad::add(total, term) : term;
    }
    return total;
}

LossBuilder gradient_matching_loss(const Model& model, std::size_t label, const ad::GradientSet& target) {
    return [&model, label, target](const ad::Var& dummy, ad::GradientSet& dummy_grads) {
        dummy_grads = weight_gradients(model, dummy, label, true);
        return gradient_distance(dummy_grads, target);
    };
}

AttackState attack_step_sgd(AttackState state, const LossBuilder& loss, double eta) {
    const Evaluation e = evaluate(loss, state.dummy);
    const std::vector<double> g = gradient_of(e);
    ++state.diagnostics.loss_evaluations;
    ++state.diagnostics.gradient_evaluations;
    state.loss = e.loss();
    state.dummy_grads = e.dummy_grads.detached();
    state.dummy = moved(state.dummy, g, -eta);
    ++state.iteration;
    return state;
}

AttackState attack_step_sgd(AttackState state, const Model& model, const ad::GradientSet& target, double eta) {
    const LossBuilder loss = gradient_matching_loss(model, state.label, target);
    return attack_step_sgd(std::move(state), loss, eta);
}

std::vector<double> lbfgs_direction(const std::vector<double>& gradient, const std::deque<CurvaturePair>& pairs) {
    std::vector<double> q = gradient;
    if (pairs.empty()) {
        double l1 = 0.0;
        for (double v : gradient) l1 += std::abs(v);
        const double factor = l1 > 1.0 ? 1.0 / l1 : 1.0;
        for (double& v : q) v = -v * factor;
        return q;
    }

    std::vector<double> alpha(pairs.size());
    for (std::size_t k = pairs.size(); k-- > 0;) {
        const auto& p = pairs[k];
        alpha[k] = p.rho * dot(p.s, q);
        for (std::size_t i = 0; i < q.size(); ++i) q[i] -= alpha[k] * p.y[i];
    }
    const auto& newest = pairs.back();
    const double gamma = dot(newest.s, newest.y) / dot(newest.y, newest.y);
    for (double& v : q) v *= gamma;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const auto& p = pairs[k];
        const double beta = p.rho * dot(p.y, q);
        for (std::size_t i = 0; i < q.size(); ++i) q[i] += (alpha[k] - beta) * p.s[i];
    }
    for (double& v : q) v = -v;
    return q;
}

namespace {

// One quasi-Newton update from the point cached in `mem`. Returns false at a stationary point.
bool lbfgs_update(Tensor& dummy, LbfgsMemory& mem, Diagnostics& diag, const LossBuilder& loss, double eta,
                  const LbfgsOptions& options) {
    const double f0 = *mem.loss;
    const std::vector<double>& g0 = mem.gradient;

    std::vector<double> direction = lbfgs_direction(g0, mem.pairs);
    double slope = dot(g0, direction);
    if (!(slope < 0.0)) {
        mem.pairs.clear();
        direction = lbfgs_direction(g0, mem.pairs);
        slope = dot(g0, direction);
    }
    if (slope == 0.0) return false;

    std::optional<Evaluation> accepted;
    Tensor next;
    double t = eta;
    for (std::size_t k = 0; k < options.max_line_search_evals; ++k, t *= options.backtrack) {
        Tensor trial = moved(dummy, direction, t);
        ++diag.loss_evaluations;
        try {
            Evaluation e = evaluate(loss, trial);
            const double f = e.loss();
            if (std::isfinite(f) && f <= f0 + options.armijo * t * slope) {
                accepted = std::move(e);
                next = std::move(trial);
                break;
            }
        } catch (const NanError&) {
            // rejected trial point; keep backtracking
        }
    }
    if (!accepted) {
        ++diag.line_search_failures;
        const double norm = std::sqrt(dot(g0, g0));
        next = moved(dummy, g0, -eta * options.fallback_fraction / norm);
        accepted = evaluate(loss, next);
        ++diag.loss_evaluations;
    }

    std::vector<double> g1 = gradient_of(*accepted);
    ++diag.gradient_evaluations;

    CurvaturePair pair;
    pair.s.resize(g1.size());
    pair.y.resize(g1.size());
    const auto x0 = dummy.data();
    const auto x1 = next.data();
    for (std::size_t i = 0; i < g1.size(); ++i) {
        pair.s[i] = x1[i] - x0[i];
        pair.y[i] = g1[i] - g0[i];
    }
    const double sy = dot(pair.s, pair.y);
    if (sy > options.curvature_epsilon) {
        pair.rho = 1.0 / sy;
        mem.pairs.push_back(std::move(pair));
        while (mem.pairs.size() > options.history) mem.pairs.pop_front();
    }

    mem.loss = accepted->loss();
    mem.dummy_grads = accepted->dummy_grads.detached();
    mem.gradient = std::move(g1);
    dummy = std::move(next);
    return true;
}

}  // namespace

AttackState attack_step_lbfgs(AttackState state, const LossBuilder& loss, double eta, const LbfgsOptions& options) {
    LbfgsMemory& mem = state.memory;
    if (!mem.loss) {
        const Evaluation e = evaluate(loss, state.dummy);
        mem.gradient = gradient_of(e);
        mem.loss = e.loss();
        mem.dummy_grads = e.dummy_grads.detached();
        ++state.diagnostics.loss_evaluations;
        ++state.diagnostics.gradient_evaluations;
    }
    state.loss = *mem.loss;
    state.dummy_grads = mem.dummy_grads;
    ++state.iteration;
    for (std::size_t k = 0; k < options.inner_iterations; ++k) {
        if (!lbfgs_update(state.dummy, mem, state.diagnostics, loss, eta, options)) break;
    }
    return state;
}

AttackState attack_step_lbfgs(AttackState state, const Model& model, const ad::GradientSet& target, double eta,
                              const LbfgsOptions& options) {
    const LossBuilder loss = gradient_matching_loss(model, state.label, target);
    return attack_step_lbfgs(std::move(state), loss, eta, options);
}

AttackResult run_attack(const Model& model, const ad::GradientSet& target, const AttackConfig& config,
                        stop::StopController& controller) {
    config.validate();
    if (controller.observations() > 0 || controller.stopped()) {
        throw InvalidArgument("run_attack: controller already has observations; pass a fresh or reset controller");
    }
    const auto started = std::chrono::steady_clock::now();
    auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    };

    AttackResult result;
    AttackState state;
    state.label = infer_label(target);
    state.dummy = init_dummy(model.spec().input_shape, config.dummy_seed);
    result.label = state.label;
    const LossBuilder loss = gradient_matching_loss(model, state.label, target);

    for (std::size_t i = 1; i <= config.max_iterations; ++i) {
        // The step consumes `state`; keep what a partial result needs.
        Tensor last_dummy = state.dummy;
        const Diagnostics last_diagnostics = state.diagnostics;
        try {
            state = config.optimizer == OptimizerKind::sgd
                        ? attack_step_sgd(std::move(state), loss, config.learning_rate)
                        : attack_step_lbfgs(std::move(state), loss, config.learning_rate, config.lbfgs);
            if (!std::isfinite(state.loss)) throw NanError("non-finite gradient distance");
        } catch (const Error& e) {
            result.reconstruction = std::move(last_dummy);
            result.iterations = result.loss_history.size();
            result.seconds = elapsed();
            result.cause = stop::StopCause::error;
            result.diagnostics = last_diagnostics;
            result.error = e.what();
            throw AttackError(std::string("attack aborted at iteration ") + std::to_string(i) + ": " + e.what(),
                              std::move(result));
        }
        result.loss_history.push_back(state.loss);
        const stop::Decision decision = controller.observe(state.loss);
        if (decision.stop) {
            result.cause = decision.cause;
            break;
        }
    }
    if (result.cause == stop::StopCause::none) result.cause = stop::StopCause::exhausted;
    result.reconstruction = state.dummy;
    result.iterations = result.loss_history.size();
    result.diagnostics = state.diagnostics;
    result.seconds = elapsed();
    return result;
}

}  // namespace gradleak::attack
