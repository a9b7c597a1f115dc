#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "ipp/common.hpp"
#include "ipp/gp.hpp"

namespace ipp {

enum class ObjectiveTag { Entropy, ExpectedImprovement, ProbabilityOfImprovement };

// The Z-score divides improvement by sigma^2 (PaperVariance) or by sigma
// (StandardDeviation, the usual Bayesian-optimization form). Both are kept.
enum class ZMode { PaperVariance, StandardDeviation };

struct ObjectiveKind {
    ObjectiveTag tag = ObjectiveTag::Entropy;
    ZMode z_mode = ZMode::PaperVariance;
};

// One-hot order is fixed as (Entropy, ExpectedImprovement, ProbabilityOfImprovement).
inline std::array<double, 3> objective_onehot(ObjectiveTag tag) {
    switch (tag) {
        case ObjectiveTag::Entropy: return {1.0, 0.0, 0.0};
        case ObjectiveTag::ExpectedImprovement: return {0.0, 1.0, 0.0};
        default: return {0.0, 0.0, 1.0};
    }
}

// Running max of posterior means at sensed locations.
struct ImprovementState {
    double best_mean = -std::numeric_limits<double>::infinity();
    void observe_mean(double m) { best_mean = std::max(best_mean, m); }
};

inline constexpr double kVarFloor = 1e-12;

// Standard normal CDF and PDF.
inline std::pair<double, double> std_normal(double z) {
    const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
    const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
    return {cdf, pdf};
}

// Improvement I = mu(x) - best and its Z-score under the selected mode.
inline std::pair<double, double> improvement_z(const Prediction& pred,
                                               const ImprovementState& state, ZMode mode) {
    const double improvement = pred.mean - state.best_mean;
    const double denom = mode == ZMode::PaperVariance ? pred.variance : std::sqrt(pred.variance);
    return {improvement, improvement / denom};
}

inline double entropy_score(const Prediction& pred) {
    return 0.5 * std::log(2.0 * M_PI * M_E * std::max(pred.variance, kVarFloor));
}

inline double prob_improvement(const Prediction& pred, const ImprovementState& state,
                               ZMode mode) {
    if (pred.variance <= kVarFloor) return pred.mean - state.best_mean > 0.0 ? 1.0 : 0.0;
    const auto [improvement, z] = improvement_z(pred, state, mode);
    (void)improvement;
    return std_normal(z).first;
}

inline double expected_improvement(const Prediction& pred, const ImprovementState& state,
                                   ZMode mode) {
    if (pred.variance <= kVarFloor) return std::max(pred.mean - state.best_mean, 0.0);
    const auto [improvement, z] = improvement_z(pred, state, mode);
    const auto [cdf, pdf] = std_normal(z);
    // the sigma^2-scaled Z can push the formula slightly negative; floor at 0
    return std::max(improvement * cdf + std::sqrt(pred.variance) * pdf, 0.0);
}

inline double score(const ObjectiveKind& kind, const Prediction& pred,
                    const ImprovementState& state) {
    switch (kind.tag) {
        case ObjectiveTag::Entropy: return entropy_score(pred);
        case ObjectiveTag::ExpectedImprovement:
            return expected_improvement(pred, state, kind.z_mode);
        default: return prob_improvement(pred, state, kind.z_mode);
    }
}

// Sum of per-point scores against the model/state before this batch.
inline double aggregate_path(const ObjectiveKind& kind, const GpModel& model,
                             const ImprovementState& state, const std::vector<Vec3>& points) {
    double total = 0.0;
    for (const Vec3& p : points) total += score(kind, model.predict(p), state);
    return total;
}

}  // namespace ipp
