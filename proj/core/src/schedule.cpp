#include "driftlab/schedule.hpp"

namespace driftlab {

double Schedule::alpha(double t) const {
    if (!(t >= 0.0 && t <= 1.0)) {
        throw OutOfRange("alpha: t=" + std::to_string(t) + " outside [0,1]");
    }
    return 1.0 - t;
}

double Schedule::loss_weight(double t) const {
    if (!(t > 0.0 && t <= 1.0)) {
        throw OutOfRange("loss_weight: t=" + std::to_string(t) + " outside (0,1]");
    }
    switch (weight_mode) {
        case WeightMode::uniform:
            return 1.0;
        case WeightMode::elbo:
            // -alpha'(t) / (1 - alpha(t)) = 1/t for the linear schedule.
            return 1.0 / t;
        case WeightMode::linear_t:
            return t;
    }
    throw OutOfRange("loss_weight: bad mode");
}

const char* to_string(WeightMode mode) {
    switch (mode) {
        case WeightMode::uniform:
            return "uniform";
        case WeightMode::elbo:
            return "elbo";
        case WeightMode::linear_t:
            return "linear_t";
    }
    return "?";
}

WeightMode weight_mode_from_string(const std::string& name) {
    if (name == "uniform") return WeightMode::uniform;
    if (name == "elbo") return WeightMode::elbo;
    if (name == "linear_t") return WeightMode::linear_t;
    throw ConfigError("unknown weight mode: " + name);
}

}  // namespace driftlab
