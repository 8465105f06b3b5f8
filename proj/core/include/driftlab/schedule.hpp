#pragma once

#include <string>

#include "driftlab/errors.hpp"

namespace driftlab {

enum class ScheduleKind { linear };

/// Loss-weight selector for the masked cross-entropy objective.
///  - uniform:  w(t) = 1
///  - elbo:     w(t) = 1/t, the variational-bound weight for the linear schedule
///  - linear_t: w(t) = t, a bounded (0,1] alternative
enum class WeightMode { uniform, elbo, linear_t };

/// Noise schedule: alpha(t) is the probability a token survives unmasked at
/// noise level t, with alpha(0)=1 and alpha(1)=0.
struct Schedule {
    ScheduleKind kind = ScheduleKind::linear;
    WeightMode weight_mode = WeightMode::elbo;

    /// Keep-probability at noise level t in [0,1].
    double alpha(double t) const;

    /// Time-dependent loss weight at t in (0,1].
    double loss_weight(double t) const;
};

const char* to_string(WeightMode mode);
WeightMode weight_mode_from_string(const std::string& name);

}  // namespace driftlab
