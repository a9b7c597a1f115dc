#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <fstream>
#include <string>
#include <vector>

#include "ipp/common.hpp"
#include "ipp/gp.hpp"
#include "ipp/nn.hpp"
#include "ipp/objective.hpp"
#include "ipp/pomcp.hpp"
#include "ipp/stats.hpp"
#include "ipp/world.hpp"

namespace ipp {

enum class FeatureVariant { MetadataOnly, FixedLength10 };

inline int feature_size(FeatureVariant v) {
    return v == FeatureVariant::MetadataOnly ? 7 : 7 + 10 * 4;
}

// Episode metadata visible to the parameter-selection policy.
struct Metadata {
    long remaining_gc = 0;
    double remaining_gc_frac = 1.0;
    int remaining_steps = 0;
    double remaining_steps_frac = 1.0;
    std::array<double, 3> objective_onehot = {1.0, 0.0, 0.0};
    long initial_gc = 1;
    int initial_steps = 1;
};

// History entries are already normalized: coords in the unit cube, value
// standardized by the episode's running statistics. Most recent last,
// zero-padded up to 10.
inline Eigen::VectorXd featurize(const Metadata& meta,
                                 const std::vector<Eigen::Vector4d>& history,
                                 FeatureVariant variant) {
    Eigen::VectorXd f = Eigen::VectorXd::Zero(feature_size(variant));
    f(0) = static_cast<double>(meta.remaining_gc) / std::max<long>(meta.initial_gc, 1);
    f(1) = meta.remaining_gc_frac;
    f(2) = static_cast<double>(meta.remaining_steps) / std::max(meta.initial_steps, 1);
    f(3) = meta.remaining_steps_frac;
    for (int i = 0; i < 3; ++i) f(4 + i) = meta.objective_onehot[i];
    if (variant == FeatureVariant::FixedLength10) {
        const int n = std::min<int>(10, static_cast<int>(history.size()));
        const int start = static_cast<int>(history.size()) - n;
        for (int i = 0; i < n; ++i) f.segment<4>(7 + 4 * i) = history[start + i];
    }
    return f;
}

// Affine map from the squashed action cube onto the planner parameter ranges;
// the t-test threshold is mapped log-uniformly.
inline SolverParams decode_params(Eigen::Vector4d raw) {
    for (int i = 0; i < 4; ++i) raw(i) = std::clamp(raw(i), -1.0, 1.0);
    const auto t = [&](int i) { return 0.5 * (raw(i) + 1.0); };
    SolverParams p;
    p.num_rollouts = static_cast<int>(std::lround(10.0 + t(0) * (300.0 - 10.0)));
    p.gamma = 0.1 + t(1) * (0.99 - 0.1);
    p.ttest_value = std::exp(std::log(1e-3) + t(2) * (std::log(0.4) - std::log(1e-3)));
    p.max_depth = static_cast<int>(std::lround(3.0 + t(3) * 12.0));
    return p;
}

struct RewardNorm {
    double mu_obj = 0.0;
    double sigma_obj = 1.0;
    static constexpr double b_survival = 1.0;
    static constexpr double p_gen = 1e-5;
    static constexpr double clip = 3.0;
};

inline double shape_reward(double r_env, long gc, const RewardNorm& norm) {
    const double z = std::clamp((r_env - norm.mu_obj) / norm.sigma_obj, -RewardNorm::clip,
                                RewardNorm::clip);
    return z + RewardNorm::b_survival - RewardNorm::p_gen * static_cast<double>(gc);
}

struct Transition {
    Eigen::VectorXd features;
    Eigen::Vector4d raw_action;
    Eigen::Vector4d u;  // pre-squash sample, needed to re-evaluate log_prob
    double log_prob = 0.0;
    double shaped_reward = 0.0;
    double value_estimate = 0.0;
    bool done = false;
};

// Standard GAE(lambda); `done` flags terminate bootstrap across episodes.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> gae_advantages(
    const std::vector<Transition>& trajectory, double gamma_rl, double lambda) {
    const int n = static_cast<int>(trajectory.size());
    Eigen::VectorXd adv(n), ret(n);
    double running = 0.0;
    for (int t = n - 1; t >= 0; --t) {
        const bool done = trajectory[t].done;
        const double next_v = (done || t + 1 >= n) ? 0.0 : trajectory[t + 1].value_estimate;
        const double delta =
            trajectory[t].shaped_reward + gamma_rl * next_v - trajectory[t].value_estimate;
        running = done ? delta : delta + gamma_rl * lambda * running;
        adv(t) = running;
        ret(t) = adv(t) + trajectory[t].value_estimate;
    }
    return {adv, ret};
}

struct PpoHyper {
    double clip_ratio = 0.2;
    int epochs = 4;
    int minibatch = 64;
    double lr = 3e-4;
    double entropy_coef = 0.0;
    double gamma_rl = 0.99;
    double lambda = 0.95;
};

// Policy trunk (features -> 4 raw means), learned state-independent log_std,
// and a separate value network of the same shape.
struct PolicyNetwork {
    FeatureVariant variant = FeatureVariant::MetadataOnly;
    Mlp trunk;
    Eigen::VectorXd log_std;
    Mlp value;

    static PolicyNetwork create(FeatureVariant variant, Rng& rng) {
        PolicyNetwork net;
        net.variant = variant;
        const int in = feature_size(variant);
        net.trunk = Mlp::create({in, 64, 64, 4}, rng);
        net.value = Mlp::create({in, 64, 64, 1}, rng);
        net.log_std = Eigen::VectorXd::Constant(4, -0.5);
        return net;
    }

    GaussianHead head(const Eigen::VectorXd& features, Mlp::Cache* cache = nullptr) const {
        GaussianHead h;
        h.mean = trunk.forward(features, cache);
        h.log_std = log_std;
        return h;
    }

    double value_of(const Eigen::VectorXd& features) const {
        return value.forward(features)(0);
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw CheckpointError("PolicyNetwork::save: cannot open " + path);
        out << "ipp-policy-v1\n" << static_cast<int>(variant) << '\n';
        save_mlp(out, trunk);
        char buf[64];
        for (int i = 0; i < log_std.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.17g\n", log_std(i));
            out << buf;
        }
        save_mlp(out, value);
        if (!out) throw CheckpointError("PolicyNetwork::save: write failed for " + path);
    }

    static PolicyNetwork load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw CheckpointError("PolicyNetwork::load: cannot open " + path);
        std::string magic;
        in >> magic;
        if (magic != "ipp-policy-v1") throw CheckpointError("PolicyNetwork::load: bad magic");
        PolicyNetwork net;
        int v = 0;
        in >> v;
        net.variant = static_cast<FeatureVariant>(v);
        net.trunk = load_mlp(in);
        net.log_std.resize(4);
        for (int i = 0; i < 4; ++i)
            if (!(in >> net.log_std(i))) throw CheckpointError("PolicyNetwork::load: truncated");
        net.value = load_mlp(in);
        return net;
    }
};

struct PpoStats {
    double mean_ratio = 1.0;
    double clip_frac = 0.0;
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
};

// Clipped-surrogate PPO with per-batch advantage normalization. Owns the
// optimizer state so repeated updates keep Adam moments.
class PpoTrainer {
  public:
    PpoTrainer(const PolicyNetwork& net, const PpoHyper& hyper, std::uint64_t shuffle_seed)
        : hyper_(hyper),
          adam_trunk_(net.trunk),
          adam_value_(net.value),
          adam_log_std_(static_cast<int>(net.log_std.size())),
          rng_(shuffle_seed) {}

    PpoStats update(PolicyNetwork& net, const std::vector<Transition>& batch) {
        if (batch.empty()) throw ConfigError("ppo_update: empty batch");
        auto [adv, ret] = gae_advantages(batch, hyper_.gamma_rl, hyper_.lambda);
        const double mean = adv.mean();
        double sd = std::sqrt((adv.array() - mean).square().sum() /
                              std::max<int>(1, static_cast<int>(adv.size()) - 1));
        if (sd < 1e-8) sd = 1.0;
        adv = (adv.array() - mean) / sd;

        const int n = static_cast<int>(batch.size());
        std::vector<int> order(n);
        for (int i = 0; i < n; ++i) order[i] = i;

        PpoStats stats{0, 0, 0, 0, 0};
        long seen = 0;
        const AdamHyper adam{hyper_.lr, 0.9, 0.999, 1e-8};
        for (int epoch = 0; epoch < hyper_.epochs; ++epoch) {
            shuffle(order);
            for (int begin = 0; begin < n; begin += hyper_.minibatch) {
                const int end = std::min(n, begin + hyper_.minibatch);
                const int m = end - begin;
                Mlp::Grads g_trunk = Mlp::Grads::zeros_like(net.trunk);
                Mlp::Grads g_value = Mlp::Grads::zeros_like(net.value);
                Eigen::VectorXd g_log_std = Eigen::VectorXd::Zero(net.log_std.size());

                for (int i = begin; i < end; ++i) {
                    const Transition& tr = batch[order[i]];
                    const double a = adv(order[i]);

                    Mlp::Cache cache;
                    GaussianHead head = net.head(tr.features, &cache);
                    const double lp = head.log_prob_of_u(tr.u);
                    const double ratio = std::exp(lp - tr.log_prob);
                    const bool clipped = (a >= 0.0 && ratio > 1.0 + hyper_.clip_ratio) ||
                                         (a < 0.0 && ratio < 1.0 - hyper_.clip_ratio);
                    stats.mean_ratio += ratio;
                    stats.clip_frac += clipped ? 1.0 : 0.0;
                    stats.policy_loss += -std::min(
                        ratio * a, std::clamp(ratio, 1.0 - hyper_.clip_ratio,
                                              1.0 + hyper_.clip_ratio) * a);
                    stats.entropy += head.entropy();

                    if (!clipped) {
                        const double coef = -a * ratio / m;  // d(-surrogate)/d log_prob
                        Mlp::Grads g = net.trunk.backward(cache, coef * head.dlogp_dmean(tr.u));
                        g_trunk.accumulate(g);
                        g_log_std += coef * head.dlogp_dlogstd(tr.u);
                    }
                    if (hyper_.entropy_coef > 0.0)
                        g_log_std.array() -= hyper_.entropy_coef / m;

                    Mlp::Cache vcache;
                    const double v = net.value.forward(tr.features, &vcache)(0);
                    const double verr = v - ret(order[i]);
                    stats.value_loss += verr * verr;
                    Eigen::VectorXd vgrad(1);
                    vgrad(0) = 2.0 * verr / m;
                    g_value.accumulate(net.value.backward(vcache, vgrad));
                    ++seen;
                }
                adam_trunk_.step(net.trunk, g_trunk, adam);
                adam_value_.step(net.value, g_value, adam);
                adam_log_std_.step(net.log_std, g_log_std, adam);
                clamp_log_std(net.log_std);
            }
        }
        stats.mean_ratio /= seen;
        stats.clip_frac /= seen;
        stats.policy_loss /= seen;
        stats.value_loss /= seen;
        stats.entropy /= seen;
        return stats;
    }

  private:
    void shuffle(std::vector<int>& order) {
        for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
            std::swap(order[i], order[rng_.uniform_int(0, i)]);
    }

    PpoHyper hyper_;
    Adam adam_trunk_;
    Adam adam_value_;
    AdamVec adam_log_std_;
    Rng rng_;
};

// ---------------------------------------------------------------------------
// Episode environment: the IPP loop one worker runs, shared by training and
// evaluation. The planner executes environment actions; the policy only
// chooses SolverParams.

struct EnvStepRecord {
    int step = 0;
    Idx3 cell = Idx3::Zero();
    SolverParams params;
    int chain_len = 0;       // length of the executed chain this step belongs to
    int samples_added = 0;
    double r_env = 0.0;
    double shaped = 0.0;
    double cumulative = 0.0;
    long gc = 0;  // generator calls of the plan, attributed to the chain's first step
};

struct DecisionResult {
    double r_env_sum = 0.0;
    double shaped = 0.0;
    long generator_calls = 0;
    std::vector<EnvStepRecord> steps;
};

class IppEnv {
  public:
    // Remaining-generator-call budget: fraction of the theoretical per-episode
    // maximum (B plans at the largest rollouts x depth).
    static constexpr double kGcBudgetFrac = 0.3;

    IppEnv(const WorldField& field, const EpisodeConfig& cfg, const KernelHyper& hyper,
           const RewardNorm& norm)
        : field_(&field), cfg_(cfg), hyper_(hyper), norm_(norm) {
        cfg_.validate();
        field.validate();
        ctx_ = PlanContext{field_, cfg_.sensing, cfg_.objective};
        gc_budget_ = static_cast<long>(cfg_.budget_steps * 300.0 * 15.0 * kGcBudgetFrac);
        reset();
    }

    void reset() {
        rng_ = Rng(cfg_.rng_seed);
        steps_done_ = 0;
        gc_used_ = 0;
        cumulative_reward_ = 0.0;
        history_.clear();
        value_stats_ = WelfordStats{};
        belief_.gp = GpModel(hyper_, field_->bounds_lo(), field_->bounds_hi());
        belief_.pose = RobotPose{field_->dims / 2};
        belief_.imp = ImprovementState{};

        const Vec3 hi = field_->bounds_hi();
        std::vector<Vec3> seeds;
        for (int i = 0; i < cfg_.seed_samples; ++i)
            seeds.emplace_back(rng_.uniform(0.0, hi.x()), rng_.uniform(0.0, hi.y()),
                               hi.z() > 0 ? rng_.uniform(0.0, hi.z()) : 0.0);
        const auto obs = observe(*field_, seeds, cfg_.obs_noise_std, &rng_);
        belief_.gp.condition_inplace(obs);
        for (const auto& [x, y] : obs) {
            belief_.imp.observe_mean(belief_.gp.predict(x).mean);
            push_history(x, y);
        }
        if (cfg_.seed_samples == 0) belief_.imp.observe_mean(hyper_.prior_mean);
    }

    bool done() const { return steps_done_ >= cfg_.budget_steps; }
    int steps_done() const { return steps_done_; }
    long generator_calls_used() const { return gc_used_; }
    double cumulative_reward() const { return cumulative_reward_; }
    const Belief& belief() const { return belief_; }
    const WorldField& field() const { return *field_; }
    const EpisodeConfig& config() const { return cfg_; }
    const RewardNorm& reward_norm() const { return norm_; }

    Metadata metadata() const {
        Metadata m;
        m.initial_gc = gc_budget_;
        m.initial_steps = cfg_.budget_steps;
        m.remaining_gc = std::max<long>(gc_budget_ - gc_used_, 0);
        m.remaining_gc_frac = static_cast<double>(m.remaining_gc) / gc_budget_;
        m.remaining_steps = cfg_.budget_steps - steps_done_;
        m.remaining_steps_frac =
            static_cast<double>(m.remaining_steps) / cfg_.budget_steps;
        m.objective_onehot = objective_onehot(cfg_.objective.tag);
        return m;
    }

    Eigen::VectorXd features(FeatureVariant variant) const {
        return featurize(metadata(), normalized_history(), variant);
    }

    // One agent decision: plan with the given parameters, then execute the
    // extracted chain (truncated at the step budget).
    DecisionResult act(const SolverParams& params) {
        if (done()) throw ConfigError("IppEnv::act: episode budget exhausted");
        const PlanResult pr = plan(ctx_, belief_, params, rng_);
        DecisionResult out;
        out.generator_calls = pr.generator_calls;
        gc_used_ += pr.generator_calls;

        const int executable = std::min<int>(static_cast<int>(pr.actions.size()),
                                             cfg_.budget_steps - steps_done_);
        for (int i = 0; i < executable; ++i) {
            EnvStepRecord rec;
            rec.step = steps_done_;
            rec.params = params;
            rec.chain_len = executable;
            rec.gc = i == 0 ? pr.generator_calls : 0;

            RobotPose next;
            try {
                next = apply_action(belief_.pose, pr.actions[i], *field_);
            } catch (const IllegalMove&) {
                // planner-side error: no-op with zero new samples
                rec.cell = belief_.pose.cell;
                rec.shaped = shape_reward(0.0, rec.gc, norm_);
                rec.cumulative = cumulative_reward_;
                ++steps_done_;
                out.steps.push_back(rec);
                continue;
            }
            const auto points = sense_path(cfg_.sensing, belief_.pose, next, *field_);
            double r_env = 0.0;
            std::vector<Sample> obs;
            obs.reserve(points.size());
            for (const Vec3& p : points) {
                const double env_value = value_at(*field_, p);
                // objective with the environment value in place of the GP mean
                Prediction pred{env_value, belief_.gp.predict(p).variance};
                r_env += score(cfg_.objective, pred, belief_.imp);
                double measured = env_value;
                if (cfg_.obs_noise_std > 0.0) measured += rng_.normal(0.0, cfg_.obs_noise_std);
                obs.emplace_back(p, measured);
            }
            belief_.gp.condition_inplace(obs);
            for (const auto& [x, y] : obs) {
                belief_.imp.observe_mean(belief_.gp.predict(x).mean);
                push_history(x, y);
            }
            belief_.pose = next;

            rec.cell = next.cell;
            rec.samples_added = static_cast<int>(obs.size());
            rec.r_env = r_env;
            rec.shaped = shape_reward(r_env, rec.gc, norm_);
            cumulative_reward_ += r_env;
            rec.cumulative = cumulative_reward_;
            out.r_env_sum += r_env;
            ++steps_done_;
            out.steps.push_back(rec);
        }
        out.shaped = shape_reward(out.r_env_sum, pr.generator_calls, norm_);
        return out;
    }

  private:
    void push_history(const Vec3& x, double y) {
        history_.emplace_back(x, y);
        if (history_.size() > 10) history_.pop_front();
        value_stats_.add(y);
    }

    std::vector<Eigen::Vector4d> normalized_history() const {
        const Vec3 lo = field_->bounds_lo();
        const Vec3 hi = field_->bounds_hi();
        const double vsd = value_stats_.count > 1 ? std::sqrt(value_stats_.variance()) : 1.0;
        std::vector<Eigen::Vector4d> out;
        for (const auto& [x, y] : history_) {
            Eigen::Vector4d e;
            for (int a = 0; a < 3; ++a) {
                const double extent = hi[a] - lo[a];
                e(a) = extent > 0 ? (x[a] - lo[a]) / extent : 0.0;
            }
            e(3) = (y - value_stats_.mean) / (vsd > 1e-12 ? vsd : 1.0);
            out.push_back(e);
        }
        return out;
    }

    const WorldField* field_;
    EpisodeConfig cfg_;
    KernelHyper hyper_;
    RewardNorm norm_;
    PlanContext ctx_;
    Belief belief_;
    Rng rng_{0};
    long gc_budget_ = 1;
    long gc_used_ = 0;
    int steps_done_ = 0;
    double cumulative_reward_ = 0.0;
    std::deque<Sample> history_;
    WelfordStats value_stats_;
};

// ---------------------------------------------------------------------------
// Training loop.

struct TrainConfig {
    int n_workers = 8;
    int steps_per_worker = 50;
    int n_updates = 60;
    Idx3 world_dims = Idx3(16, 16, 8);
    Vec3 world_spacing = Vec3(1.0, 1.0, 1.0);
    SyntheticSpec synth;
    ObjectiveKind objective{ObjectiveTag::ExpectedImprovement, ZMode::PaperVariance};
    FeatureVariant variant = FeatureVariant::MetadataOnly;
    PpoHyper ppo;
    KernelHyper gp_hyper;
    int seed_samples = 5;
    SensingConfig sensing;
    int warmup_episodes = 20;
    std::uint64_t master_seed = 0;

    void validate() const {
        if (n_workers < 1 || steps_per_worker < 1 || n_updates < 0 || warmup_episodes < 0)
            throw ConfigError("TrainConfig: counts must be positive");
    }
};

struct TrainLogRow {
    int update = 0;
    double mean_shaped_return = 0.0;
    double mean_env_return = 0.0;
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double clip_frac = 0.0;
    double entropy = 0.0;
};

struct TrainResult {
    PolicyNetwork policy;
    RewardNorm norm;
    std::vector<TrainLogRow> log;
};

// Reward-normalization statistics from random-parameter warmup episodes,
// estimated once and then frozen for the whole training run.
inline RewardNorm estimate_reward_norm(const TrainConfig& cfg, Rng& rng) {
    WelfordStats stats;
    for (int e = 0; e < cfg.warmup_episodes; ++e) {
        const WorldField field =
            make_synthetic_field(rng.next_u64(), cfg.synth, cfg.world_dims, cfg.world_spacing);
        EpisodeConfig ecfg;
        ecfg.budget_steps = cfg.steps_per_worker;
        ecfg.seed_samples = cfg.seed_samples;
        ecfg.objective = cfg.objective;
        ecfg.sensing = cfg.sensing;
        ecfg.rng_seed = rng.next_u64();
        IppEnv env(field, ecfg, cfg.gp_hyper, RewardNorm{});
        Rng arng = rng.spawn();
        while (!env.done()) {
            Eigen::Vector4d raw;
            for (int i = 0; i < 4; ++i) raw(i) = arng.uniform(-1.0, 1.0);
            const DecisionResult d = env.act(decode_params(raw));
            stats.add(d.r_env_sum);
        }
    }
    RewardNorm norm;
    if (stats.count > 1) {
        norm.mu_obj = stats.mean;
        norm.sigma_obj = std::max(std::sqrt(stats.variance()), 1e-6);
    }
    return norm;
}

inline TrainResult train(const TrainConfig& cfg) {
    cfg.validate();
    Rng master(cfg.master_seed);
    Rng init_rng = master.spawn();
    TrainResult result;
    result.policy = PolicyNetwork::create(cfg.variant, init_rng);

    Rng warmup_rng = master.spawn();
    result.norm = estimate_reward_norm(cfg, warmup_rng);

    PpoTrainer trainer(result.policy, cfg.ppo, master.next_u64());
    Rng world_rng = master.spawn();

    for (int update = 0; update < cfg.n_updates; ++update) {
        std::vector<Transition> batch;
        double shaped_sum = 0.0, env_sum = 0.0;
        for (int w = 0; w < cfg.n_workers; ++w) {
            const WorldField field = make_synthetic_field(world_rng.next_u64(), cfg.synth,
                                                          cfg.world_dims, cfg.world_spacing);
            EpisodeConfig ecfg;
            ecfg.budget_steps = cfg.steps_per_worker;
            ecfg.seed_samples = cfg.seed_samples;
            ecfg.objective = cfg.objective;
            ecfg.sensing = cfg.sensing;
            ecfg.rng_seed = world_rng.next_u64();
            IppEnv env(field, ecfg, cfg.gp_hyper, result.norm);
            Rng arng = world_rng.spawn();
            while (!env.done()) {
                Transition tr;
                tr.features = env.features(cfg.variant);
                const GaussianHead head = result.policy.head(tr.features);
                const auto s = head.sample(arng);
                tr.raw_action = s.action;
                tr.u = s.u;
                tr.log_prob = s.log_prob;
                tr.value_estimate = result.policy.value_of(tr.features);
                const DecisionResult d = env.act(decode_params(tr.raw_action));
                tr.shaped_reward = d.shaped;
                tr.done = env.done();
                shaped_sum += d.shaped;
                env_sum += d.r_env_sum;
                batch.push_back(std::move(tr));
            }
        }
        const PpoStats stats = trainer.update(result.policy, batch);
        TrainLogRow row;
        row.update = update;
        row.mean_shaped_return = shaped_sum / cfg.n_workers;
        row.mean_env_return = env_sum / cfg.n_workers;
        row.policy_loss = stats.policy_loss;
        row.value_loss = stats.value_loss;
        row.clip_frac = stats.clip_frac;
        row.entropy = stats.entropy;
        result.log.push_back(row);
    }
    return result;
}

}  // namespace ipp
