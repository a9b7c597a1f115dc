#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "ipp/nn.hpp"

using namespace ipp;

TEST_CASE("mlp forward matches a triple-loop oracle") {
    Rng rng(17);
    const Mlp net = Mlp::create({3, 5, 2}, rng);
    Eigen::VectorXd x(3);
    x << 0.4, -1.2, 0.9;

    std::vector<double> h = {x(0), x(1), x(2)};
    for (int l = 0; l < net.n_layers(); ++l) {
        std::vector<double> next(net.sizes[l + 1], 0.0);
        for (int i = 0; i < net.sizes[l + 1]; ++i) {
            double acc = net.biases[l](i);
            for (int j = 0; j < net.sizes[l]; ++j) acc += net.weights[l](i, j) * h[j];
            next[i] = l + 1 < net.n_layers() ? std::tanh(acc) : acc;
        }
        h = next;
    }
    const Eigen::VectorXd out = net.forward(x);
    REQUIRE(out.size() == 2);
    for (int i = 0; i < 2; ++i) CHECK(out(i) == Catch::Approx(h[i]).margin(1e-14));
}

TEST_CASE("mlp forward degenerate cases") {
    Rng rng(5);
    Mlp net = Mlp::create({2, 3, 2}, rng);
    for (auto& w : net.weights) w.setZero();
    net.biases.back() << 0.7, -0.3;
    const Eigen::VectorXd out = net.forward(Eigen::VectorXd::Ones(2) * 4.2);
    CHECK(out(0) == 0.7);
    CHECK(out(1) == -0.3);

    // single linear layer is plain affine
    Mlp lin = Mlp::create({2, 2}, rng);
    lin.weights[0].setIdentity();
    lin.biases[0].setZero();
    Eigen::VectorXd x(2);
    x << 3.0, -5.0;
    CHECK(lin.forward(x) == x);

    Eigen::VectorXd wrong(3);
    CHECK_THROWS_AS(net.forward(wrong), ShapeMismatch);
}

TEST_CASE("mlp backward matches central finite differences") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
        Rng rng(seed);
        Mlp net = Mlp::create({4, 6, 3}, rng);
        Eigen::VectorXd x(4), g(3);
        for (int i = 0; i < 4; ++i) x(i) = rng.normal();
        for (int i = 0; i < 3; ++i) g(i) = rng.normal();

        Mlp::Cache cache;
        net.forward(x, &cache);
        const Mlp::Grads grads = net.backward(cache, g);

        const double eps = 1e-5;
        auto loss = [&](const Mlp& m, const Eigen::VectorXd& in) { return g.dot(m.forward(in)); };
        auto check_rel = [](double analytic, double numeric) {
            const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            CHECK(std::abs(analytic - numeric) / denom <= 1e-4);
        };

        for (int l = 0; l < net.n_layers(); ++l) {
            for (int i = 0; i < net.weights[l].rows(); ++i)
                for (int j = 0; j < net.weights[l].cols(); ++j) {
                    Mlp pert = net;
                    pert.weights[l](i, j) += eps;
                    const double up = loss(pert, x);
                    pert.weights[l](i, j) -= 2 * eps;
                    const double dn = loss(pert, x);
                    check_rel(grads.d_weights[l](i, j), (up - dn) / (2 * eps));
                }
            for (int i = 0; i < net.biases[l].size(); ++i) {
                Mlp pert = net;
                pert.biases[l](i) += eps;
                const double up = loss(pert, x);
                pert.biases[l](i) -= 2 * eps;
                const double dn = loss(pert, x);
                check_rel(grads.d_biases[l](i), (up - dn) / (2 * eps));
            }
        }
        for (int i = 0; i < 4; ++i) {
            Eigen::VectorXd xp = x, xm = x;
            xp(i) += eps;
            xm(i) -= eps;
            check_rel(grads.d_input(i), (loss(net, xp) - loss(net, xm)) / (2 * eps));
        }
    }
}

TEST_CASE("mlp backward is linear in grad_out") {
    Rng rng(12);
    const Mlp net = Mlp::create({3, 4, 2}, rng);
    Eigen::VectorXd x(3);
    x << 0.1, 0.2, -0.4;
    Mlp::Cache cache;
    net.forward(x, &cache);

    const Mlp::Grads zero = net.backward(cache, Eigen::VectorXd::Zero(2));
    for (const auto& w : zero.d_weights) CHECK(w.norm() == 0.0);
    CHECK(zero.d_input.norm() == 0.0);

    Eigen::VectorXd a(2), b(2);
    a << 1.0, -0.5;
    b << 0.3, 2.0;
    const Mlp::Grads ga = net.backward(cache, a);
    const Mlp::Grads gb = net.backward(cache, b);
    const Mlp::Grads gab = net.backward(cache, a + b);
    for (int l = 0; l < net.n_layers(); ++l) {
        CHECK((gab.d_weights[l] - ga.d_weights[l] - gb.d_weights[l]).norm() < 1e-12);
        CHECK((gab.d_biases[l] - ga.d_biases[l] - gb.d_biases[l]).norm() < 1e-12);
    }
}

TEST_CASE("adam zero gradient leaves parameters untouched") {
    Rng rng(3);
    Mlp net = Mlp::create({2, 3, 1}, rng);
    const Mlp before = net;
    Adam opt(net);
    opt.step(net, Mlp::Grads::zeros_like(net), AdamHyper{});
    for (int l = 0; l < net.n_layers(); ++l) {
        CHECK(net.weights[l] == before.weights[l]);
        CHECK(net.biases[l] == before.biases[l]);
    }
}

TEST_CASE("adam first step moves by about lr in the gradient sign direction") {
    AdamHyper hyper;
    hyper.lr = 0.01;
    Eigen::VectorXd p(3);
    p << 1.0, -2.0, 0.5;
    const Eigen::VectorXd before = p;
    Eigen::VectorXd g(3);
    g << 0.7, -0.2, 3.0;
    AdamVec opt(3);
    opt.step(p, g, hyper);
    for (int i = 0; i < 3; ++i) {
        const double step = before(i) - p(i);
        CHECK(step == Catch::Approx(hyper.lr * (g(i) > 0 ? 1.0 : -1.0)).margin(1e-5));
    }
}

TEST_CASE("adam drives a quadratic to its minimum") {
    AdamHyper hyper;
    hyper.lr = 0.05;
    Eigen::VectorXd p(4);
    p << 3.0, -1.5, 0.2, 7.0;
    AdamVec opt(4);
    for (int i = 0; i < 2000; ++i) opt.step(p, p, hyper);  // grad of 0.5*||p||^2
    CHECK(p.norm() < 1e-3);
}

TEST_CASE("gaussian head log-prob and entropy") {
    GaussianHead head;
    head.mean = Eigen::VectorXd::Zero(2);
    head.log_std = Eigen::VectorXd::Zero(2);

    Eigen::VectorXd u(2);
    u << 0.3, -1.1;
    double expect = 0.0;
    for (int i = 0; i < 2; ++i) {
        expect += -0.5 * u(i) * u(i) - 0.5 * std::log(2.0 * M_PI);
        const double a = std::tanh(u(i));
        expect -= std::log(1.0 - a * a + kTanhEps);
    }
    CHECK(head.log_prob_of_u(u) == Catch::Approx(expect).margin(1e-12));

    CHECK(head.entropy() == Catch::Approx(std::log(2.0 * M_PI * M_E)).margin(1e-12));
    head.log_std << 0.5, -0.25;
    CHECK(head.entropy() ==
          Catch::Approx(0.25 + std::log(2.0 * M_PI * M_E)).margin(1e-12));
}

TEST_CASE("gaussian head gradients match finite differences") {
    GaussianHead head;
    head.mean = Eigen::VectorXd::Zero(3);
    head.mean << 0.2, -0.7, 1.1;
    head.log_std = Eigen::VectorXd::Zero(3);
    head.log_std << -0.3, 0.1, -1.0;
    Eigen::VectorXd u(3);
    u << 0.5, -0.6, 0.9;

    const Eigen::VectorXd dm = head.dlogp_dmean(u);
    const Eigen::VectorXd ds = head.dlogp_dlogstd(u);
    const double eps = 1e-6;
    for (int i = 0; i < 3; ++i) {
        GaussianHead pert = head;
        pert.mean(i) += eps;
        const double up = pert.log_prob_of_u(u);
        pert.mean(i) -= 2 * eps;
        const double dn = pert.log_prob_of_u(u);
        CHECK(dm(i) == Catch::Approx((up - dn) / (2 * eps)).margin(1e-5));

        pert = head;
        pert.log_std(i) += eps;
        const double sup = pert.log_prob_of_u(u);
        pert.log_std(i) -= 2 * eps;
        const double sdn = pert.log_prob_of_u(u);
        CHECK(ds(i) == Catch::Approx((sup - sdn) / (2 * eps)).margin(1e-5));
    }
}

TEST_CASE("gaussian head sampling") {
    GaussianHead head;
    head.mean = Eigen::VectorXd::Zero(1);
    head.mean << 0.8;
    head.log_std = Eigen::VectorXd::Zero(1);

    // tiny std: the action collapses onto tanh(mean)
    head.log_std << kLogStdMin;
    Rng rng(21);
    for (int i = 0; i < 10; ++i) {
        const auto s = head.sample(rng);
        CHECK(s.action(0) == Catch::Approx(std::tanh(0.8)).margin(1e-2));
        CHECK(s.action(0) > -1.0);
        CHECK(s.action(0) < 1.0);
    }

    // empirical mean of tanh(u) against a trapezoid quadrature oracle
    head.log_std << -0.2;
    const double sigma = std::exp(-0.2);
    double quad = 0.0;
    const int nq = 20000;
    for (int i = 0; i < nq; ++i) {
        const double z = -8.0 + 16.0 * (i + 0.5) / nq;
        const double uq = 0.8 + sigma * z;
        quad += std::tanh(uq) * std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI) * (16.0 / nq);
    }
    double acc = 0.0;
    const int n = 200000;
    Rng rng2(22);
    for (int i = 0; i < n; ++i) acc += head.sample(rng2).action(0);
    CHECK(acc / n == Catch::Approx(quad).margin(3e-3));
}

TEST_CASE("log std clamping") {
    Eigen::VectorXd ls(3);
    ls << -9.0, 0.0, 4.0;
    clamp_log_std(ls);
    CHECK(ls(0) == kLogStdMin);
    CHECK(ls(1) == 0.0);
    CHECK(ls(2) == kLogStdMax);
}

TEST_CASE("mlp checkpoint round trip is exact") {
    Rng rng(404);
    const Mlp net = Mlp::create({7, 16, 16, 4}, rng);
    std::stringstream ss;
    save_mlp(ss, net);
    const Mlp back = load_mlp(ss);
    REQUIRE(back.sizes == net.sizes);
    for (int l = 0; l < net.n_layers(); ++l) {
        CHECK(back.weights[l] == net.weights[l]);
        CHECK(back.biases[l] == net.biases[l]);
    }

    std::stringstream bad("3 7 16");  // truncated header
    CHECK_THROWS_AS(load_mlp(bad), CheckpointError);
}
