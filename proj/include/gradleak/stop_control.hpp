#pragma once

#include <cstddef>
#include <limits>
#include <string>

namespace gradleak::stop {

enum class ControllerKind { never, threshold, plateau, hybrid };
enum class StopCause { none, threshold, plateau, exhausted, error };

std::string to_string(ControllerKind kind);
std::string to_string(StopCause cause);
ControllerKind parse_controller_kind(const std::string& name);

struct Decision {
    bool stop = false;
    StopCause cause = StopCause::none;
};

/// Streaming early-stopping rule over the monitored loss, fed once per attack iteration.
///
/// threshold: stop as soon as loss < T.
/// plateau:   track the best loss seen; each non-improving observation
///            (loss >= best) increments `wait`, an improvement resets it.
///            Stop when `wait` reaches P.
/// hybrid:    threshold rule first, then the plateau rule.
class StopController {
public:
    static StopController never();
    static StopController threshold(double threshold);
    static StopController plateau(std::size_t patience);
    static StopController hybrid(double threshold, std::size_t patience);

    /// Throws InvalidArgument for a non-finite or negative loss, or when called after a stop.
    Decision observe(double loss);
    void reset();

    ControllerKind kind() const noexcept { return kind_; }
    double threshold_value() const noexcept { return threshold_; }
    std::size_t patience() const noexcept { return patience_; }
    std::size_t wait() const noexcept { return wait_; }
    bool plateau_started() const noexcept { return plateau_start_; }
    double best() const noexcept { return best_; }
    bool stopped() const noexcept { return early_stop_; }
    std::size_t observations() const noexcept { return observations_; }

    /// e.g. "hybrid_T1e-05_P15"
    std::string label() const;

private:
    StopController(ControllerKind kind, double threshold, std::size_t patience);

    bool plateau_update(double loss);

    ControllerKind kind_;
    double threshold_;
    std::size_t patience_;
    std::size_t wait_ = 0;
    bool plateau_start_ = false;
    double best_ = std::numeric_limits<double>::infinity();
    bool early_stop_ = false;
    std::size_t observations_ = 0;
};

}  // namespace gradleak::stop
