#include "apsc/belief.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace apsc::belief {

double GaussianBelief::stddev() const { return std::sqrt(variance); }

bool GaussianBelief::valid() const {
    return std::isfinite(mean) && variance > 0.0 && std::isfinite(variance);
}

GaussianBelief GaussianBelief::from_std(double mean, double stddev) {
    return {mean, stddev * stddev, 0};
}

void MeasurementModel::validate() const {
    if (!(noise_variance >= 0.0)) throw std::invalid_argument("measurement variance must be >= 0");
    if (!(clamp_lo < clamp_hi)) throw std::invalid_argument("measurement clamp range is empty");
}

GaussianBelief update(const GaussianBelief& prior, double measurement,
                      const MeasurementModel& model) {
    const double r = model.noise_variance;
    const double p = prior.variance;
    const double denom = r + p;
    return {(r * prior.mean + p * measurement) / denom, r * p / denom, prior.update_count + 1};
}

double sample_measurement(double true_friction, const MeasurementModel& model, Rng& rng) {
    if (model.noise_variance <= 0.0) return true_friction;
    const double m = true_friction + std::sqrt(model.noise_variance) * standard_normal(rng);
    return std::clamp(m, model.clamp_lo, model.clamp_hi);
}

GaussianBelief posterior_after_n(const GaussianBelief& prior, std::span<const double> measurements,
                                 const MeasurementModel& model) {
    GaussianBelief b = prior;
    for (double m : measurements) b = update(b, m, model);
    return b;
}

}  // namespace apsc::belief
