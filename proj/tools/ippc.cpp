// ippc: train / eval / episode / plot front end for the IPP library.

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "ipp/config.hpp"
#include "ipp/harness.hpp"

using namespace ipp;
namespace fs = std::filesystem;

namespace {

Config load_config(const std::string& path) {
    return path.empty() ? Config{} : Config::from_file(path);
}

KernelHyper gp_from(const Config& cfg) {
    KernelHyper h;
    h.lengthscale = cfg.get_double("gp.lengthscale", h.lengthscale);
    h.signal_variance = cfg.get_double("gp.signal_variance", h.signal_variance);
    h.noise_variance = cfg.get_double("gp.noise_variance", h.noise_variance);
    h.prior_mean = cfg.get_double("gp.prior_mean", h.prior_mean);
    return h;
}

SyntheticSpec synth_from(const Config& cfg) {
    SyntheticSpec s;
    s.min_blobs = cfg.get_int("world.blobs_min", s.min_blobs);
    s.max_blobs = cfg.get_int("world.blobs_max", s.max_blobs);
    s.min_amplitude = cfg.get_double("world.amplitude_min", s.min_amplitude);
    s.max_amplitude = cfg.get_double("world.amplitude_max", s.max_amplitude);
    return s;
}

Idx3 dims_from(const Config& cfg) {
    return Idx3(cfg.get_int("world.nx", 16), cfg.get_int("world.ny", 16),
                cfg.get_int("world.nz", 8));
}

Vec3 spacing_from(const Config& cfg) {
    const double s = cfg.get_double("world.spacing", 1.0);
    return Vec3(cfg.get_double("world.sx", s), cfg.get_double("world.sy", s),
                cfg.get_double("world.sz", s));
}

WorldField world_from(const Config& cfg, std::uint64_t seed) {
    const std::string csv = cfg.get_str("world.csv", "");
    if (!csv.empty()) return load_grid_csv(csv);
    return make_synthetic_field(static_cast<std::uint64_t>(cfg.get_long("world.seed",
                                                                        static_cast<long>(seed))),
                                synth_from(cfg), dims_from(cfg), spacing_from(cfg));
}

SolverParams fixed_params_from(const Config& cfg) {
    SolverParams p = SolverParams::naive();
    p.num_rollouts = cfg.get_int("pomcp.rollouts", p.num_rollouts);
    p.gamma = cfg.get_double("pomcp.gamma", p.gamma);
    p.ttest_value = cfg.get_double("pomcp.ttest", p.ttest_value);
    p.max_depth = cfg.get_int("pomcp.depth", p.max_depth);
    return p;
}

EpisodeConfig episode_from(const Config& cfg, std::uint64_t seed) {
    EpisodeConfig e;
    e.budget_steps = cfg.get_int("harness.budget", 50);
    e.seed_samples = cfg.get_int("harness.seed_samples", e.seed_samples);
    e.obs_noise_std = cfg.get_double("harness.obs_noise", 0.0);
    e.sensing.samples_per_edge = cfg.get_int("pomcp.samples_per_edge", 4);
    e.objective.tag = objective_from_name(cfg.get_str("harness.objective", "ei"));
    e.objective.z_mode = cfg.get_str("harness.z_mode", "paper") == "standard"
                             ? ZMode::StandardDeviation
                             : ZMode::PaperVariance;
    e.rng_seed = seed;
    return e;
}

RewardNorm norm_from(const Config& cfg) {
    RewardNorm n;
    n.mu_obj = cfg.get_double("harness.norm_mu", 0.0);
    n.sigma_obj = cfg.get_double("harness.norm_sigma", 1.0);
    return n;
}

PolicySpec policy_from(const Config& cfg, const std::string& name) {
    PolicySpec spec;
    spec.kind = policy_kind_from_name(name);
    spec.fixed = fixed_params_from(cfg);
    if (spec.kind == PolicyKind::LearnedMetadata)
        spec.checkpoint = cfg.get_str("harness.checkpoint", "");
    else if (spec.kind == PolicyKind::LearnedFixedLength)
        spec.checkpoint = cfg.get_str("harness.checkpoint_fixedlength",
                                      cfg.get_str("harness.checkpoint", ""));
    return spec;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string tok;
    std::stringstream ss(s);
    while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) out.push_back(tok);
    }
    return out;
}

int cmd_train(const Config& cfg, std::uint64_t seed, const std::string& out_dir) {
    TrainConfig tc;
    tc.n_workers = cfg.get_int("agent.workers", tc.n_workers);
    tc.steps_per_worker = cfg.get_int("agent.steps", tc.steps_per_worker);
    tc.n_updates = cfg.get_int("agent.updates", tc.n_updates);
    tc.warmup_episodes = cfg.get_int("agent.warmup", tc.warmup_episodes);
    tc.world_dims = dims_from(cfg);
    tc.world_spacing = spacing_from(cfg);
    tc.synth = synth_from(cfg);
    tc.objective.tag = objective_from_name(cfg.get_str("agent.objective", "ei"));
    tc.variant = cfg.get_str("agent.variant", "metadata") == "fixedlength"
                     ? FeatureVariant::FixedLength10
                     : FeatureVariant::MetadataOnly;
    tc.ppo.lr = cfg.get_double("agent.lr", tc.ppo.lr);
    tc.ppo.clip_ratio = cfg.get_double("agent.clip_ratio", tc.ppo.clip_ratio);
    tc.ppo.epochs = cfg.get_int("agent.epochs", tc.ppo.epochs);
    tc.ppo.minibatch = cfg.get_int("agent.minibatch", tc.ppo.minibatch);
    tc.ppo.gamma_rl = cfg.get_double("agent.gamma_rl", tc.ppo.gamma_rl);
    tc.ppo.lambda = cfg.get_double("agent.lambda", tc.ppo.lambda);
    tc.ppo.entropy_coef = cfg.get_double("agent.entropy_coef", tc.ppo.entropy_coef);
    tc.gp_hyper = gp_from(cfg);
    tc.seed_samples = cfg.get_int("harness.seed_samples", tc.seed_samples);
    tc.sensing.samples_per_edge = cfg.get_int("pomcp.samples_per_edge", 4);
    tc.master_seed = seed;

    const auto t0 = std::chrono::steady_clock::now();
    const TrainResult result = train(tc);
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    fs::create_directories(out_dir);
    const std::string ckpt = out_dir + "/policy.ckpt";
    const std::string log = out_dir + "/training_log.csv";
    result.policy.save(ckpt);
    write_training_log_csv(result.log, log);
    std::printf("wrote %s\nwrote %s\n", ckpt.c_str(), log.c_str());
    std::printf("reward normalization: mu=%.17g sigma=%.17g\n", result.norm.mu_obj,
                result.norm.sigma_obj);
    std::fprintf(stderr, "training wall time: %.1f s\n", dt);
    return 0;
}

int cmd_eval(const Config& cfg, std::uint64_t seed, const std::string& out_dir) {
    ExperimentMatrix m;
    const int n_worlds = cfg.get_int("harness.worlds", 1);
    for (int i = 0; i < n_worlds; ++i)
        m.worlds.emplace_back("w" + std::to_string(i), world_from(cfg, seed + 1000 * (i + 1)));
    for (const std::string& name :
         split_list(cfg.get_str("harness.objectives", cfg.get_str("harness.objective", "ei"))))
        m.objectives.push_back({objective_from_name(name),
                                cfg.get_str("harness.z_mode", "paper") == "standard"
                                    ? ZMode::StandardDeviation
                                    : ZMode::PaperVariance});
    for (const std::string& name : split_list(cfg.get_str("harness.policies", "naive,random")))
        m.policies.push_back(policy_from(cfg, name));
    const int n_seeds = cfg.get_int("harness.seeds", 5);
    for (int i = 0; i < n_seeds; ++i) m.seeds.push_back(seed + i);
    m.episode_template = episode_from(cfg, seed);
    m.gp_hyper = gp_from(cfg);
    m.norm = norm_from(cfg);

    const ExperimentResults res = run_experiment(m);
    for (const auto& err : res.cell_errors) std::fprintf(stderr, "ERROR cell %s\n", err.c_str());

    std::string notice;
    const auto files = emit_outputs(res, out_dir, &notice);
    if (!notice.empty()) {
        std::printf("%s\n", notice.c_str());
        return res.cell_errors.empty() ? 0 : 1;
    }
    for (const auto& f : files) std::printf("wrote %s\n", f.c_str());
    for (const auto& a : res.aggregates)
        std::printf("%s/%s: mean %.6g +- %.6g over %d episodes\n", a.objective.c_str(),
                    a.policy.c_str(), a.mean, a.stddev, a.n);
    for (const auto& s : res.sign_tests)
        std::printf("%s: %s vs %s: %d/%d/%d (w/l/t), one-sided p=%.4g\n", s.objective.c_str(),
                    s.policy_a.c_str(), s.policy_b.c_str(), s.wins_a, s.wins_b, s.ties,
                    s.p_one_sided);
    return res.cell_errors.empty() ? 0 : 1;
}

int cmd_episode(const Config& cfg, std::uint64_t seed, const std::string& out_dir) {
    const WorldField world = world_from(cfg, seed);
    const PolicySpec spec = policy_from(cfg, cfg.get_str("harness.policy", "naive"));
    const EpisodeConfig ecfg = episode_from(cfg, seed);
    const EpisodeLog log =
        run_episode(world, spec, ecfg, gp_from(cfg), norm_from(cfg), "world");
    fs::create_directories(out_dir);
    const std::string path = out_dir + "/episode_" + log.world_spec + "_" + log.objective +
                             "_" + log.policy_id + "_" + std::to_string(log.seed) + ".csv";
    write_episode_csv(log, path);
    std::printf("wrote %s\n", path.c_str());
    std::printf("final cumulative reward: %.17g over %zu steps, %ld generator calls\n",
                log.final_cumulative(), log.steps.size(), log.total_generator_calls());
    return 0;
}

int cmd_plot(const Config& cfg, const std::string& out_dir) {
    const std::string input_dir = cfg.get_str("harness.input_dir", ".");
    std::vector<EpisodeLog> logs;
    std::vector<fs::path> paths;
    for (const auto& entry : fs::directory_iterator(input_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".csv" &&
            entry.path().filename().string().rfind("episode_", 0) == 0)
            paths.push_back(entry.path());
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) logs.push_back(read_episode_csv(p.string()));
    if (logs.empty()) {
        std::printf("NoData: no episode CSVs under %s, nothing written\n", input_dir.c_str());
        return 0;
    }
    fs::create_directories(out_dir);
    write_reward_svg(logs, out_dir + "/reward.svg");
    write_params_svg(logs, out_dir + "/params.svg");
    std::printf("wrote %s/reward.svg\nwrote %s/params.svg\n", out_dir.c_str(), out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"informative path planning with learned planner parameters"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out";
    std::uint64_t seed = 0;

    auto* train_cmd = app.add_subcommand("train", "train a parameter-selection policy");
    auto* eval_cmd = app.add_subcommand("eval", "run an evaluation matrix");
    auto* episode_cmd = app.add_subcommand("episode", "run and log a single episode");
    auto* plot_cmd = app.add_subcommand("plot", "render SVG plots from episode CSVs");
    for (CLI::App* sub : {train_cmd, eval_cmd, episode_cmd, plot_cmd}) {
        sub->add_option("--config", config_path, "key=value configuration file");
        sub->add_option("--seed", seed, "master random seed");
        sub->add_option("--out", out_dir, "output directory");
    }

    CLI11_PARSE(app, argc, argv);

    try {
        const Config cfg = load_config(config_path);
        if (train_cmd->parsed()) return cmd_train(cfg, seed, out_dir);
        if (eval_cmd->parsed()) return cmd_eval(cfg, seed, out_dir);
        if (episode_cmd->parsed()) return cmd_episode(cfg, seed, out_dir);
        if (plot_cmd->parsed()) return cmd_plot(cfg, out_dir);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "ERROR %s\n", e.what());
        return 1;
    }
    return 0;
}
