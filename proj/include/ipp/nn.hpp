#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "ipp/common.hpp"

namespace ipp {

// Dense network, tanh hidden layers, linear output.
class Mlp {
  public:
    std::vector<int> sizes;
    std::vector<Eigen::MatrixXd> weights;  // weights[l]: (sizes[l+1], sizes[l])
    std::vector<Eigen::VectorXd> biases;

    static Mlp create(const std::vector<int>& layer_sizes, Rng& rng) {
        if (layer_sizes.size() < 2) throw ShapeMismatch("Mlp: need at least input and output");
        Mlp net;
        net.sizes = layer_sizes;
        for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
            const int fan_in = layer_sizes[l];
            const int fan_out = layer_sizes[l + 1];
            Eigen::MatrixXd w(fan_out, fan_in);
            for (int i = 0; i < fan_out; ++i)
                for (int j = 0; j < fan_in; ++j) w(i, j) = rng.normal() / std::sqrt(fan_in);
            net.weights.push_back(std::move(w));
            net.biases.push_back(Eigen::VectorXd::Zero(fan_out));
        }
        return net;
    }

    int n_layers() const { return static_cast<int>(weights.size()); }
    int input_size() const { return sizes.front(); }
    int output_size() const { return sizes.back(); }

    struct Cache {
        std::vector<Eigen::VectorXd> activations;  // input of each layer; size n_layers+1
    };

    Eigen::VectorXd forward(const Eigen::VectorXd& input, Cache* cache = nullptr) const {
        if (input.size() != input_size())
            throw ShapeMismatch("Mlp::forward: input size " + std::to_string(input.size()) +
                                ", expected " + std::to_string(input_size()));
        Eigen::VectorXd h = input;
        if (cache) cache->activations = {h};
        for (int l = 0; l < n_layers(); ++l) {
            h = weights[l] * h + biases[l];
            if (l + 1 < n_layers()) h = h.array().tanh();
            if (cache) cache->activations.push_back(h);
        }
        return h;
    }

    struct Grads {
        std::vector<Eigen::MatrixXd> d_weights;
        std::vector<Eigen::VectorXd> d_biases;
        Eigen::VectorXd d_input;

        static Grads zeros_like(const Mlp& net) {
            Grads g;
            for (int l = 0; l < net.n_layers(); ++l) {
                g.d_weights.emplace_back(Eigen::MatrixXd::Zero(net.weights[l].rows(),
                                                               net.weights[l].cols()));
                g.d_biases.emplace_back(Eigen::VectorXd::Zero(net.biases[l].size()));
            }
            g.d_input = Eigen::VectorXd::Zero(net.input_size());
            return g;
        }
        void accumulate(const Grads& o) {
            for (std::size_t l = 0; l < d_weights.size(); ++l) {
                d_weights[l] += o.d_weights[l];
                d_biases[l] += o.d_biases[l];
            }
        }
        void scale(double s) {
            for (std::size_t l = 0; l < d_weights.size(); ++l) {
                d_weights[l] *= s;
                d_biases[l] *= s;
            }
        }
    };

    Grads backward(const Cache& cache, const Eigen::VectorXd& grad_out) const {
        if (static_cast<int>(cache.activations.size()) != n_layers() + 1)
            throw ShapeMismatch("Mlp::backward: cache does not match network");
        if (grad_out.size() != output_size())
            throw ShapeMismatch("Mlp::backward: grad_out size mismatch");
        Grads g;
        g.d_weights.resize(n_layers());
        g.d_biases.resize(n_layers());
        Eigen::VectorXd delta = grad_out;
        for (int l = n_layers() - 1; l >= 0; --l) {
            g.d_weights[l] = delta * cache.activations[l].transpose();
            g.d_biases[l] = delta;
            Eigen::VectorXd d_prev = weights[l].transpose() * delta;
            if (l > 0) {
                const auto& h = cache.activations[l];  // tanh output of layer l-1
                delta = d_prev.array() * (1.0 - h.array().square());
            } else {
                g.d_input = d_prev;
            }
        }
        return g;
    }
};

struct AdamHyper {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

namespace detail {
template <typename P, typename G>
void adam_apply(P& param, const G& grad, P& m, P& v, const AdamHyper& h, long t) {
    m = h.beta1 * m + (1.0 - h.beta1) * grad;
    v = (h.beta2 * v.array() + (1.0 - h.beta2) * grad.array().square()).matrix();
    const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
    param.array() -= h.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + h.eps);
}
}  // namespace detail

// Adam state for one Mlp.
struct Adam {
    std::vector<Eigen::MatrixXd> m_w, v_w;
    std::vector<Eigen::VectorXd> m_b, v_b;
    long t = 0;

    explicit Adam(const Mlp& net) {
        for (int l = 0; l < net.n_layers(); ++l) {
            m_w.emplace_back(Eigen::MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
            v_w.emplace_back(Eigen::MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
            m_b.emplace_back(Eigen::VectorXd::Zero(net.biases[l].size()));
            v_b.emplace_back(Eigen::VectorXd::Zero(net.biases[l].size()));
        }
    }

    void step(Mlp& net, const Mlp::Grads& grads, const AdamHyper& hyper) {
        ++t;
        for (int l = 0; l < net.n_layers(); ++l) {
            detail::adam_apply(net.weights[l], grads.d_weights[l], m_w[l], v_w[l], hyper, t);
            detail::adam_apply(net.biases[l], grads.d_biases[l], m_b[l], v_b[l], hyper, t);
        }
    }
};

// Adam state for a bare parameter vector (the state-independent log_std).
struct AdamVec {
    Eigen::VectorXd m, v;
    long t = 0;
    explicit AdamVec(int n) : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}
    void step(Eigen::VectorXd& param, const Eigen::VectorXd& grad, const AdamHyper& hyper) {
        ++t;
        detail::adam_apply(param, grad, m, v, hyper, t);
    }
};

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 1.0;
inline constexpr double kTanhEps = 1e-6;

// Diagonal Gaussian with tanh squashing into (-1, 1).
struct GaussianHead {
    Eigen::VectorXd mean;
    Eigen::VectorXd log_std;

    struct SampleResult {
        Eigen::VectorXd u;       // pre-squash sample
        Eigen::VectorXd action;  // tanh(u)
        double log_prob = 0.0;
        double entropy = 0.0;
    };

    double log_prob_of_u(const Eigen::VectorXd& u) const {
        double lp = 0.0;
        for (int i = 0; i < mean.size(); ++i) {
            const double s = std::exp(log_std(i));
            const double z = (u(i) - mean(i)) / s;
            const double a = std::tanh(u(i));
            lp += -0.5 * z * z - log_std(i) - 0.5 * std::log(2.0 * M_PI);
            lp -= std::log(1.0 - a * a + kTanhEps);  // tanh Jacobian correction
        }
        return lp;
    }

    double entropy() const {
        // entropy of the underlying diagonal Gaussian
        return log_std.sum() + 0.5 * mean.size() * std::log(2.0 * M_PI * M_E);
    }

    // Deterministic action at the distribution mode; used for greedy evaluation.
    Eigen::VectorXd mean_action() const {
        Eigen::VectorXd a(mean.size());
        for (int i = 0; i < mean.size(); ++i) a(i) = std::tanh(mean(i));
        return a;
    }

    SampleResult sample(Rng& rng) const {
        SampleResult out;
        out.u.resize(mean.size());
        out.action.resize(mean.size());
        for (int i = 0; i < mean.size(); ++i) {
            out.u(i) = rng.normal(mean(i), std::exp(log_std(i)));
            out.action(i) = std::tanh(out.u(i));
        }
        out.log_prob = log_prob_of_u(out.u);
        out.entropy = entropy();
        return out;
    }

    // d log_prob / d mean for a fixed pre-squash sample u
    Eigen::VectorXd dlogp_dmean(const Eigen::VectorXd& u) const {
        Eigen::VectorXd g(mean.size());
        for (int i = 0; i < mean.size(); ++i) {
            const double s = std::exp(log_std(i));
            g(i) = (u(i) - mean(i)) / (s * s);
        }
        return g;
    }

    Eigen::VectorXd dlogp_dlogstd(const Eigen::VectorXd& u) const {
        Eigen::VectorXd g(mean.size());
        for (int i = 0; i < mean.size(); ++i) {
            const double s = std::exp(log_std(i));
            const double z = (u(i) - mean(i)) / s;
            g(i) = z * z - 1.0;
        }
        return g;
    }
};

inline void clamp_log_std(Eigen::VectorXd& log_std) {
    log_std = log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
}

// Text checkpoint section for one Mlp; %.17g round-trips doubles exactly.
inline void save_mlp(std::ostream& out, const Mlp& net) {
    out << net.sizes.size();
    for (int s : net.sizes) out << ' ' << s;
    out << '\n';
    char buf[64];
    for (int l = 0; l < net.n_layers(); ++l) {
        for (int i = 0; i < net.weights[l].rows(); ++i)
            for (int j = 0; j < net.weights[l].cols(); ++j) {
                std::snprintf(buf, sizeof(buf), "%.17g\n", net.weights[l](i, j));
                out << buf;
            }
        for (int i = 0; i < net.biases[l].size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.17g\n", net.biases[l](i));
            out << buf;
        }
    }
}

inline Mlp load_mlp(std::istream& in) {
    std::size_t n_sizes = 0;
    if (!(in >> n_sizes) || n_sizes < 2) throw CheckpointError("load_mlp: bad layer count");
    Mlp net;
    net.sizes.resize(n_sizes);
    for (auto& s : net.sizes)
        if (!(in >> s) || s <= 0) throw CheckpointError("load_mlp: bad layer size");
    for (std::size_t l = 0; l + 1 < n_sizes; ++l) {
        Eigen::MatrixXd w(net.sizes[l + 1], net.sizes[l]);
        for (int i = 0; i < w.rows(); ++i)
            for (int j = 0; j < w.cols(); ++j)
                if (!(in >> w(i, j))) throw CheckpointError("load_mlp: truncated weights");
        Eigen::VectorXd b(net.sizes[l + 1]);
        for (int i = 0; i < b.size(); ++i)
            if (!(in >> b(i))) throw CheckpointError("load_mlp: truncated biases");
        net.weights.push_back(std::move(w));
        net.biases.push_back(std::move(b));
    }
    return net;
}

}  // namespace ipp
