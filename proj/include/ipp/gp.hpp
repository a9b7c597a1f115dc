#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>
#include <cmath>
#include <utility>
#include <vector>

#include "ipp/common.hpp"

namespace ipp {

struct KernelHyper {
    double lengthscale = 0.06;      // in normalized (unit-cube) coordinates
    double signal_variance = 1.0;
    double noise_variance = 1e-4;
    double prior_mean = 0.0;

    bool valid() const {
        return lengthscale > 0.0 && signal_variance > 0.0 && noise_variance >= 0.0 &&
               std::isfinite(prior_mean);
    }
};

// Squared exponential kernel.
inline double kernel_eval(const Vec3& a, const Vec3& b, const KernelHyper& h) {
    const double d2 = (a - b).squaredNorm();
    return h.signal_variance * std::exp(-d2 / (2.0 * h.lengthscale * h.lengthscale));
}

struct Prediction {
    double mean = 0.0;
    double variance = 0.0;  // latent-function variance, excludes observation noise
};

using Sample = std::pair<Vec3, double>;

// GP posterior over sensed (location, value) pairs.
//
// The Cholesky factor of K(X,X) + noise*I is maintained incrementally, one
// appended row per sample, together with w = L^{-1}(y - prior_mean). Predict
// then needs a single triangular solve: mean = prior + v.w, var = k(q,q) - v.v
// with v = L^{-1} k*.
//
// Locations are mapped into a unit cube (isotropic scaling by the longest
// world axis) so one lengthscale default serves all world sizes.
class GpModel {
  public:
    GpModel() = default;

    explicit GpModel(const KernelHyper& hyper) : hyper_(hyper) {
        if (!hyper.valid()) throw ConfigError("GpModel: invalid kernel hyperparameters");
    }

    GpModel(const KernelHyper& hyper, const Vec3& bounds_lo, const Vec3& bounds_hi)
        : GpModel(hyper) {
        offset_ = bounds_lo;
        const double extent = (bounds_hi - bounds_lo).maxCoeff();
        if (extent > 0.0) inv_scale_ = 1.0 / extent;
    }

    const KernelHyper& hyper() const { return hyper_; }
    int size() const { return n_; }

    // Pure conditioning: returns a new model containing old and new samples.
    GpModel condition(const std::vector<Sample>& new_samples) const {
        GpModel out = fork(static_cast<int>(new_samples.size()));
        out.condition_inplace(new_samples);
        return out;
    }

    void condition_inplace(const std::vector<Sample>& new_samples) {
        ensure_capacity(n_ + static_cast<int>(new_samples.size()));
        for (const auto& [x, y] : new_samples) add_sample(normalize(x), y);
    }

    // Predict every point against the current posterior, then condition on the
    // predicted means in one pass. Reuses each point's triangular solve for
    // its factor row, and appends w entries that are identically zero (the
    // posterior mean is a fixed point of conditioning on itself), so this
    // matches predict-all-then-condition at a third of the solve count.
    std::vector<Prediction> condition_on_means(const std::vector<Vec3>& points) {
        const int k = static_cast<int>(points.size());
        const int n0 = n_;
        ensure_capacity(n0 + k);
        std::vector<Prediction> preds;
        preds.reserve(k);
        const double kxx = hyper_.signal_variance + hyper_.noise_variance;
        for (int j = 0; j < k; ++j) {
            const Vec3 q = normalize(points[j]);
            Eigen::VectorXd r(n_);
            for (int i = 0; i < n0; ++i) r(i) = kernel_eval(q, x_[i], hyper_);
            if (n0 > 0)
                L_.topLeftCorner(n0, n0).triangularView<Eigen::Lower>().solveInPlace(
                    r.head(n0));
            const double mean = hyper_.prior_mean + r.head(n0).dot(w_.head(n0));
            preds.push_back({mean, std::max(hyper_.signal_variance -
                                                r.head(n0).squaredNorm(), 0.0)});
            // continue the forward substitution over this batch's earlier rows
            for (int i = n0; i < n_; ++i)
                r(i) = (kernel_eval(q, x_[i], hyper_) -
                        L_.row(i).head(i).dot(r.head(i))) /
                       L_(i, i);
            double d2 = kxx - r.squaredNorm();
            if (!extend_diag_ok(d2))
                throw NumericalFailure("GpModel: near-duplicate sample, diagonal <= 0 after jitter");
            L_.row(n_).head(n_) = r.transpose();
            L_(n_, n_) = std::sqrt(d2);
            w_(n_) = 0.0;
            x_.push_back(q);
            y_.push_back(mean);
            ++n_;
        }
        return preds;
    }

    Prediction predict(const Vec3& query) const {
        if (n_ == 0) return {hyper_.prior_mean, hyper_.signal_variance};
        const Vec3 q = normalize(query);
        Eigen::VectorXd k(n_);
        for (int i = 0; i < n_; ++i) k(i) = kernel_eval(q, x_[i], hyper_);
        L_.topLeftCorner(n_, n_).triangularView<Eigen::Lower>().solveInPlace(k);
        const double mean = hyper_.prior_mean + k.dot(w_.head(n_));
        const double var = hyper_.signal_variance - k.squaredNorm();
        return {mean, std::max(var, 0.0)};
    }

    // Copy with room for `extra_capacity` further samples without reallocation.
    GpModel fork(int extra_capacity) const {
        GpModel out;
        out.hyper_ = hyper_;
        out.offset_ = offset_;
        out.inv_scale_ = inv_scale_;
        out.n_ = n_;
        out.x_ = x_;
        out.x_.reserve(n_ + extra_capacity);
        const int cap = n_ + extra_capacity;
        out.L_.setZero(cap, cap);
        out.L_.topLeftCorner(n_, n_) = L_.topLeftCorner(n_, n_);
        out.w_.resize(cap);
        out.w_.head(n_) = w_.head(n_);
        out.y_ = y_;
        out.y_.reserve(cap);
        return out;
    }

    // Lower Cholesky factor of K(X,X) + noise*I (active part).
    Eigen::MatrixXd factor() const { return L_.topLeftCorner(n_, n_); }

    // Solved weight vector alpha = (K + noise*I)^{-1} (y - prior_mean).
    Eigen::VectorXd alpha() const {
        Eigen::VectorXd a = w_.head(n_);
        L_.topLeftCorner(n_, n_).triangularView<Eigen::Lower>().transpose().solveInPlace(a);
        return a;
    }

    const std::vector<Vec3>& locations_normalized() const { return x_; }
    const std::vector<double>& values() const { return y_; }

    Vec3 normalize(const Vec3& x) const { return (x - offset_) * inv_scale_; }

  private:
    void ensure_capacity(int need) {
        const int cap = static_cast<int>(L_.rows());
        if (cap >= need) return;
        const int ncap = std::max(need, std::max(8, 2 * cap));
        Eigen::MatrixXd nl = Eigen::MatrixXd::Zero(ncap, ncap);
        nl.topLeftCorner(n_, n_) = L_.topLeftCorner(n_, n_);
        L_.swap(nl);
        Eigen::VectorXd nw(ncap);
        nw.head(n_) = w_.head(n_);
        w_.swap(nw);
    }

    void add_sample(const Vec3& xn, double y) {
        const double kxx = hyper_.signal_variance + hyper_.noise_variance;
        double d2;
        if (n_ == 0) {
            d2 = kxx;
            if (!extend_diag_ok(d2)) throw NumericalFailure("GpModel: non-positive diagonal");
            L_(0, 0) = std::sqrt(d2);
            w_(0) = (y - hyper_.prior_mean) / L_(0, 0);
        } else {
            Eigen::VectorXd l(n_);
            for (int i = 0; i < n_; ++i) l(i) = kernel_eval(xn, x_[i], hyper_);
            L_.topLeftCorner(n_, n_).triangularView<Eigen::Lower>().solveInPlace(l);
            d2 = kxx - l.squaredNorm();
            if (!extend_diag_ok(d2))
                throw NumericalFailure("GpModel: near-duplicate sample, diagonal <= 0 after jitter");
            const double d = std::sqrt(d2);
            L_.row(n_).head(n_) = l.transpose();
            L_(n_, n_) = d;
            w_(n_) = (y - hyper_.prior_mean - l.dot(w_.head(n_))) / d;
        }
        x_.push_back(xn);
        y_.push_back(y);
        ++n_;
    }

    // Escalating jitter on a non-positive extended diagonal entry.
    static bool extend_diag_ok(double& d2) {
        if (d2 > 0.0) return true;
        for (double jitter : {1e-10, 1e-8, 1e-6}) {
            if (d2 + jitter > 0.0) {
                d2 += jitter;
                return true;
            }
        }
        return false;
    }

    KernelHyper hyper_;
    Vec3 offset_ = Vec3::Zero();
    double inv_scale_ = 1.0;
    int n_ = 0;
    std::vector<Vec3> x_;       // normalized locations
    std::vector<double> y_;     // raw values
    Eigen::MatrixXd L_;         // lower Cholesky factor, active n_ x n_
    Eigen::VectorXd w_;         // L^{-1}(y - prior_mean), active n_
};

}  // namespace ipp
