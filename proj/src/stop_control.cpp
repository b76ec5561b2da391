#include "gradleak/stop_control.hpp"

#include <cmath>
#include <cstdio>

#include "gradleak/errors.hpp"

namespace gradleak::stop {

std::string to_string(ControllerKind kind) {
    switch (kind) {
        case ControllerKind::never: return "never";
        case ControllerKind::threshold: return "threshold";
        case ControllerKind::plateau: return "plateau";
        case ControllerKind::hybrid: return "hybrid";
    }
    return "unknown";
}

std::string to_string(StopCause cause) {
    switch (cause) {
        case StopCause::none: return "none";
        case StopCause::threshold: return "threshold";
        case StopCause::plateau: return "plateau";
        case StopCause::exhausted: return "exhausted-N";
        case StopCause::error: return "error";
    }
    return "unknown";
}

ControllerKind parse_controller_kind(const std::string& name) {
    if (name == "never") return ControllerKind::never;
    if (name == "threshold") return ControllerKind::threshold;
    if (name == "plateau") return ControllerKind::plateau;
    if (name == "hybrid") return ControllerKind::hybrid;
    throw InvalidArgument("unknown controller kind '" + name + "'");
}

StopController::StopController(ControllerKind kind, double threshold, std::size_t patience)
    : kind_(kind), threshold_(threshold), patience_(patience) {
    const bool uses_threshold = kind == ControllerKind::threshold || kind == ControllerKind::hybrid;
    const bool uses_patience = kind == ControllerKind::plateau || kind == ControllerKind::hybrid;
    if (uses_threshold && !(std::isfinite(threshold) && threshold >= 0.0)) {
        throw InvalidArgument("threshold must be finite and >= 0");
    }
    if (uses_patience && patience == 0) throw InvalidArgument("patience must be >= 1");
}

StopController StopController::never() { return {ControllerKind::never, 0.0, 0}; }
StopController StopController::threshold(double threshold) { return {ControllerKind::threshold, threshold, 0}; }
StopController StopController::plateau(std::size_t patience) { return {ControllerKind::plateau, 0.0, patience}; }
StopController StopController::hybrid(double threshold, std::size_t patience) {
    return {ControllerKind::hybrid, threshold, patience};
}

bool StopController::plateau_update(double loss) {
    if (loss < best_) {
        best_ = loss;
        wait_ = 0;
        plateau_start_ = false;
    } else {
        ++wait_;
        plateau_start_ = true;
    }
    return wait_ == patience_ && plateau_start_;
}

Decision StopController::observe(double loss) {
    if (early_stop_) throw InvalidArgument("observe() called on a stopped controller; reset() it first");
    if (!std::isfinite(loss) || loss < 0.0) {
        throw InvalidArgument("monitored loss must be finite and >= 0, got " + std::to_string(loss));
    }
    ++observations_;
    Decision d;
    switch (kind_) {
        case ControllerKind::never: break;
        case ControllerKind::threshold:
            if (loss < threshold_) d = {true, StopCause::threshold};
            break;
        case ControllerKind::plateau:
            if (plateau_update(loss)) d = {true, StopCause::plateau};
            break;
        case ControllerKind::hybrid:
            if (loss < threshold_) {
                d = {true, StopCause::threshold};
            } else if (plateau_update(loss)) {
                d = {true, StopCause::plateau};
            }
            break;
    }
    early_stop_ = d.stop;
    return d;
}

void StopController::reset() {
    wait_ = 0;
    plateau_start_ = false;
    early_stop_ = false;
    best_ = std::numeric_limits<double>::infinity();
    observations_ = 0;
}

std::string StopController::label() const {
    char buf[64];
    switch (kind_) {
        case ControllerKind::never: return "never";
        case ControllerKind::threshold: std::snprintf(buf, sizeof buf, "threshold_T%g", threshold_); break;
        case ControllerKind::plateau: std::snprintf(buf, sizeof buf, "plateau_P%zu", patience_); break;
        case ControllerKind::hybrid: std::snprintf(buf, sizeof buf, "hybrid_T%g_P%zu", threshold_, patience_); break;
    }
    return buf;
}

}  // namespace gradleak::stop
