#pragma once

#include <span>

#include "apsc/rng.hpp"

namespace apsc::belief {

/// Gaussian posterior over the road friction coefficient. The mean doubles
/// as the point estimate handed to controllers.
struct GaussianBelief {
    double mean = 0.3;
    double variance = 0.01;
    int update_count = 0;

    double stddev() const;
    bool valid() const;

    static GaussianBelief from_std(double mean, double stddev);
};

/// Measurement noise assumed by the estimator plus the physical range that
/// generated measurements are clamped to.
struct MeasurementModel {
    double noise_variance = 0.1;
    double clamp_lo = 0.05;
    double clamp_hi = 1.2;

    void validate() const;
};

/// Conjugate update with one measurement.
GaussianBelief update(const GaussianBelief& prior, double measurement,
                      const MeasurementModel& model);

/// true_friction + N(0, noise_variance), clamped to the model range.
double sample_measurement(double true_friction, const MeasurementModel& model, Rng& rng);

/// Left fold of `update` over the sequence.
GaussianBelief posterior_after_n(const GaussianBelief& prior, std::span<const double> measurements,
                                 const MeasurementModel& model);

}  // namespace apsc::belief
