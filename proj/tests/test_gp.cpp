#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <numeric>

#include "ipp/common.hpp"
#include "ipp/gp.hpp"

using namespace ipp;

namespace {

// Independent dense-solve oracle: direct (K + noise*I)^{-1} posterior.
struct DenseOracle {
    KernelHyper hyper;
    std::vector<Vec3> xs;
    Eigen::VectorXd y;

    Prediction predict(const Vec3& q) const {
        const int n = static_cast<int>(xs.size());
        Eigen::MatrixXd k_mat(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) k_mat(i, j) = kernel_eval(xs[i], xs[j], hyper);
        k_mat.diagonal().array() += hyper.noise_variance;
        Eigen::VectorXd kq(n);
        for (int i = 0; i < n; ++i) kq(i) = kernel_eval(q, xs[i], hyper);
        const Eigen::MatrixXd kinv = k_mat.inverse();
        const double mean =
            hyper.prior_mean + kq.dot(kinv * (y.array() - hyper.prior_mean).matrix());
        const double var = kernel_eval(q, q, hyper) - kq.dot(kinv * kq);
        return {mean, std::max(var, 0.0)};
    }
};

std::vector<Sample> random_samples(int n, Rng& rng) {
    std::vector<Sample> out;
    for (int i = 0; i < n; ++i)
        out.emplace_back(Vec3(rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)),
                         rng.normal(0.0, 1.0));
    return out;
}

}  // namespace

TEST_CASE("kernel_eval basics") {
    KernelHyper h;
    h.lengthscale = 0.3;
    h.signal_variance = 2.5;
    const Vec3 a(0.1, 0.2, 0.3);
    CHECK(kernel_eval(a, a, h) == Catch::Approx(2.5));

    h.signal_variance = 1.0;
    const Vec3 b = a + Vec3(h.lengthscale, 0, 0);
    CHECK(kernel_eval(a, b, h) == Catch::Approx(std::exp(-0.5)).epsilon(1e-9));
    CHECK(std::abs(kernel_eval(a, b, h) - 0.606531) < 1e-6);

    const Vec3 c = a + Vec3(20.0 * h.lengthscale, 0, 0);
    CHECK(kernel_eval(a, c, h) < 1e-12);
}

TEST_CASE("exact interpolation at zero noise") {
    KernelHyper h;
    h.lengthscale = 0.5;
    h.noise_variance = 0.0;
    GpModel gp(h);
    const Vec3 x0(0.25, 0.5, 0.75);
    gp = gp.condition({{x0, 2.0}});
    const Prediction p = gp.predict(x0);
    CHECK(p.mean == Catch::Approx(2.0).margin(1e-9));
    CHECK(p.variance == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("conditioning on an empty list is the identity") {
    Rng rng(7);
    GpModel gp{KernelHyper{}};
    gp = gp.condition(random_samples(6, rng));
    const GpModel same = gp.condition({});
    const Vec3 q(0.3, 0.9, 0.1);
    CHECK(gp.predict(q).mean == same.predict(q).mean);
    CHECK(gp.predict(q).variance == same.predict(q).variance);
    CHECK(gp.size() == same.size());
}

TEST_CASE("posterior matches the dense-solve oracle") {
    Rng rng(42);
    KernelHyper h;
    h.lengthscale = 0.35;
    h.signal_variance = 1.7;
    h.noise_variance = 1e-3;
    h.prior_mean = 0.4;

    const auto samples = random_samples(10, rng);
    GpModel gp(h);
    gp = gp.condition(samples);

    DenseOracle oracle{h, {}, Eigen::VectorXd(10)};
    for (int i = 0; i < 10; ++i) {
        oracle.xs.push_back(samples[i].first);
        oracle.y(i) = samples[i].second;
    }
    for (int trial = 0; trial < 20; ++trial) {
        const Vec3 q(rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1));
        const Prediction got = gp.predict(q);
        const Prediction want = oracle.predict(q);
        CHECK(got.mean == Catch::Approx(want.mean).margin(1e-8));
        CHECK(got.variance == Catch::Approx(want.variance).margin(1e-8));
    }
}

TEST_CASE("three-sample model matches oracle off data") {
    Rng rng(5);
    KernelHyper h;
    h.lengthscale = 0.4;
    const auto samples = random_samples(3, rng);
    GpModel gp = GpModel(h).condition(samples);
    DenseOracle oracle{h, {}, Eigen::VectorXd(3)};
    for (int i = 0; i < 3; ++i) {
        oracle.xs.push_back(samples[i].first);
        oracle.y(i) = samples[i].second;
    }
    const Vec3 q(0.9, 0.05, 0.55);
    CHECK(gp.predict(q).mean == Catch::Approx(oracle.predict(q).mean).margin(1e-8));
    CHECK(gp.predict(q).variance == Catch::Approx(oracle.predict(q).variance).margin(1e-8));
}

TEST_CASE("empty model predicts the prior") {
    KernelHyper h;
    h.prior_mean = 1.25;
    h.signal_variance = 0.8;
    const Prediction p = GpModel(h).predict(Vec3(3, 4, 5));
    CHECK(p.mean == 1.25);
    CHECK(p.variance == 0.8);
}

TEST_CASE("variance bounds and monotone information") {
    Rng rng(11);
    KernelHyper h;
    h.lengthscale = 0.3;
    h.signal_variance = 2.0;
    GpModel gp(h);
    std::vector<Vec3> queries;
    for (int i = 0; i < 15; ++i)
        queries.emplace_back(rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1));

    std::vector<double> prev_var(queries.size(), h.signal_variance);
    for (int round = 0; round < 8; ++round) {
        gp = gp.condition(random_samples(4, rng));
        for (std::size_t i = 0; i < queries.size(); ++i) {
            const double v = gp.predict(queries[i]).variance;
            CHECK(v >= 0.0);
            CHECK(v <= h.signal_variance + 1e-9);
            CHECK(v <= prev_var[i] + 1e-9);
            prev_var[i] = v;
        }
    }
}

TEST_CASE("order independence of conditioning") {
    Rng rng(13);
    KernelHyper h;
    h.lengthscale = 0.25;
    auto samples = random_samples(12, rng);
    GpModel a = GpModel(h).condition(samples);

    auto shuffled = samples;
    for (int i = static_cast<int>(shuffled.size()) - 1; i > 0; --i)
        std::swap(shuffled[i], shuffled[rng.uniform_int(0, i)]);
    GpModel b = GpModel(h).condition(shuffled);

    for (int trial = 0; trial < 10; ++trial) {
        const Vec3 q(rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1));
        CHECK(a.predict(q).mean == Catch::Approx(b.predict(q).mean).margin(1e-8));
        CHECK(a.predict(q).variance == Catch::Approx(b.predict(q).variance).margin(1e-8));
    }
}

TEST_CASE("incremental factor equals batch Cholesky up to 200 samples") {
    Rng rng(17);
    KernelHyper h;
    h.lengthscale = 0.2;
    h.noise_variance = 1e-4;
    GpModel gp(h);
    // spread: random batch sizes up to a 200-sample model
    while (gp.size() < 200) {
        const int batch = std::min(200 - gp.size(), rng.uniform_int(1, 17));
        gp = gp.condition(random_samples(batch, rng));
    }
    const int n = gp.size();
    const auto& xs = gp.locations_normalized();
    Eigen::MatrixXd k_mat(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) k_mat(i, j) = kernel_eval(xs[i], xs[j], h);
    k_mat.diagonal().array() += h.noise_variance;
    const Eigen::MatrixXd batch_l = Eigen::LLT<Eigen::MatrixXd>(k_mat).matrixL();
    const Eigen::MatrixXd inc_l = gp.factor();
    CHECK((batch_l - inc_l).cwiseAbs().maxCoeff() < 1e-10);
    // diagonal strictly positive
    CHECK(inc_l.diagonal().minCoeff() > 0.0);
}

TEST_CASE("alpha is consistent with the factor") {
    Rng rng(19);
    KernelHyper h;
    h.prior_mean = 0.7;
    GpModel gp = GpModel(h).condition(random_samples(8, rng));
    const Eigen::MatrixXd l = gp.factor();
    Eigen::VectorXd y(8);
    for (int i = 0; i < 8; ++i) y(i) = gp.values()[i] - h.prior_mean;
    const Eigen::VectorXd expect = (l * l.transpose()).inverse() * y;
    CHECK((gp.alpha() - expect).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("unit-cube normalization keeps predictions scale free") {
    // the same relative geometry at two world scales gives identical posteriors
    KernelHyper h;
    h.lengthscale = 0.12;
    h.noise_variance = 0.0;
    GpModel small(h, Vec3(0, 0, 0), Vec3(10, 10, 5));
    GpModel large(h, Vec3(0, 0, 0), Vec3(1000, 1000, 500));
    small = small.condition({{Vec3(2, 3, 1), 1.0}, {Vec3(7, 8, 4), -0.5}});
    large = large.condition({{Vec3(200, 300, 100), 1.0}, {Vec3(700, 800, 400), -0.5}});
    const Prediction a = small.predict(Vec3(5, 5, 2.5));
    const Prediction b = large.predict(Vec3(500, 500, 250));
    CHECK(a.mean == Catch::Approx(b.mean).margin(1e-12));
    CHECK(a.variance == Catch::Approx(b.variance).margin(1e-12));
}

TEST_CASE("near-duplicate points survive via jitter at zero noise") {
    KernelHyper h;
    h.noise_variance = 0.0;
    GpModel gp(h);
    const Vec3 x(0.5, 0.5, 0.5);
    CHECK_NOTHROW(gp = gp.condition({{x, 1.0}, {x, 1.0}}));
    CHECK(gp.size() == 2);
}

TEST_CASE("invalid hyperparameters are rejected") {
    KernelHyper h;
    h.lengthscale = 0.0;
    CHECK_FALSE(h.valid());
    CHECK_THROWS_AS(GpModel(h), ConfigError);
}

TEST_CASE("condition_on_means matches predict-then-condition") {
    Rng rng(414);
    KernelHyper h;
    h.lengthscale = 0.25;
    GpModel a(h), b(h);
    std::vector<Sample> base;
    for (int i = 0; i < 12; ++i)
        base.emplace_back(Vec3(rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)),
                          rng.normal(0, 1));
    a.condition_inplace(base);
    b.condition_inplace(base);

    std::vector<Vec3> batch;
    for (int i = 0; i < 4; ++i)
        batch.emplace_back(rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1));

    // oracle: predict every point first, then condition on those means
    std::vector<Prediction> expect;
    std::vector<Sample> mean_samples;
    for (const Vec3& p : batch) {
        expect.push_back(a.predict(p));
        mean_samples.emplace_back(p, expect.back().mean);
    }
    a.condition_inplace(mean_samples);

    const auto got = b.condition_on_means(batch);
    REQUIRE(got.size() == batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        CHECK(got[i].mean == Catch::Approx(expect[i].mean).margin(1e-10));
        CHECK(got[i].variance == Catch::Approx(expect[i].variance).margin(1e-10));
    }
    CHECK(b.size() == a.size());

    // the two posteriors agree everywhere afterwards
    for (int i = 0; i < 20; ++i) {
        const Vec3 q(rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1));
        const Prediction pa = a.predict(q);
        const Prediction pb = b.predict(q);
        CHECK(pa.mean == Catch::Approx(pb.mean).margin(1e-9));
        CHECK(pa.variance == Catch::Approx(pb.variance).margin(1e-9));
    }

    // conditioning on the posterior mean leaves the mean field unchanged
    const Prediction before = b.predict(Vec3(0.5, 0.5, 0.5));
    b.condition_on_means({Vec3(0.2, 0.8, 0.1)});
    CHECK(b.predict(Vec3(0.5, 0.5, 0.5)).mean == Catch::Approx(before.mean).margin(1e-9));
}
