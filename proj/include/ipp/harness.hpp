#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ipp/agent.hpp"
#include "ipp/common.hpp"
#include "ipp/world.hpp"

namespace ipp {

inline const char* objective_name(ObjectiveTag tag) {
    switch (tag) {
        case ObjectiveTag::Entropy: return "entropy";
        case ObjectiveTag::ExpectedImprovement: return "ei";
        default: return "pi";
    }
}

inline ObjectiveTag objective_from_name(const std::string& name) {
    if (name == "entropy") return ObjectiveTag::Entropy;
    if (name == "ei") return ObjectiveTag::ExpectedImprovement;
    if (name == "pi") return ObjectiveTag::ProbabilityOfImprovement;
    throw ConfigError("unknown objective '" + name + "' (expected entropy|ei|pi)");
}

enum class PolicyKind { NaiveFixed, RandomParams, LearnedMetadata, LearnedFixedLength };

inline const char* policy_kind_name(PolicyKind k) {
    switch (k) {
        case PolicyKind::NaiveFixed: return "naive";
        case PolicyKind::RandomParams: return "random";
        case PolicyKind::LearnedMetadata: return "learned-metadata";
        default: return "learned-fixedlength";
    }
}

inline PolicyKind policy_kind_from_name(const std::string& name) {
    if (name == "naive") return PolicyKind::NaiveFixed;
    if (name == "random") return PolicyKind::RandomParams;
    if (name == "learned-metadata") return PolicyKind::LearnedMetadata;
    if (name == "learned-fixedlength") return PolicyKind::LearnedFixedLength;
    throw ConfigError("unknown policy kind '" + name + "'");
}

struct PolicySpec {
    PolicyKind kind = PolicyKind::NaiveFixed;
    std::string checkpoint;              // learned kinds
    SolverParams fixed = SolverParams::naive();  // NaiveFixed

    std::string id() const { return policy_kind_name(kind); }
};

struct EpisodeLog {
    std::uint64_t seed = 0;
    std::string objective;
    std::string world_spec;
    std::string policy_id;
    std::vector<EnvStepRecord> steps;

    double final_cumulative() const { return steps.empty() ? 0.0 : steps.back().cumulative; }
    long total_generator_calls() const {
        long gc = 0;
        for (const auto& s : steps) gc += s.gc;
        return gc;
    }
};

// Full IPP loop to the step budget under one parameter-selection policy.
inline EpisodeLog run_episode(const WorldField& world, const PolicySpec& spec,
                              const EpisodeConfig& cfg, const KernelHyper& hyper,
                              const RewardNorm& norm, const std::string& world_id = "world") {
    IppEnv env(world, cfg, hyper, norm);
    EpisodeLog log;
    log.seed = cfg.rng_seed;
    log.objective = objective_name(cfg.objective.tag);
    log.world_spec = world_id;
    log.policy_id = spec.id();

    PolicyNetwork net;
    const bool learned =
        spec.kind == PolicyKind::LearnedMetadata || spec.kind == PolicyKind::LearnedFixedLength;
    if (learned) {
        net = PolicyNetwork::load(spec.checkpoint);
        const FeatureVariant want = spec.kind == PolicyKind::LearnedMetadata
                                        ? FeatureVariant::MetadataOnly
                                        : FeatureVariant::FixedLength10;
        if (net.variant != want)
            throw CheckpointError("run_episode: checkpoint variant does not match policy kind");
    }
    if (spec.kind == PolicyKind::NaiveFixed && !spec.fixed.valid())
        throw ConfigError("run_episode: fixed SolverParams out of range");

    Rng action_rng(cfg.rng_seed ^ 0x5bf03635f0a5b5d5ull);
    while (!env.done()) {
        SolverParams params;
        switch (spec.kind) {
            case PolicyKind::NaiveFixed: params = spec.fixed; break;
            case PolicyKind::RandomParams: {
                Eigen::Vector4d raw;
                for (int i = 0; i < 4; ++i) raw(i) = action_rng.uniform(-1.0, 1.0);
                params = decode_params(raw);
                break;
            }
            default: {
                // Greedy evaluation: act at the policy mode rather than sampling.
                const Eigen::VectorXd feat = env.features(net.variant);
                params = decode_params(net.head(feat).mean_action());
            }
        }
        const DecisionResult d = env.act(params);
        for (const auto& s : d.steps) log.steps.push_back(s);
    }
    return log;
}

struct ExperimentMatrix {
    std::vector<std::pair<std::string, WorldField>> worlds;
    std::vector<ObjectiveKind> objectives;
    std::vector<PolicySpec> policies;
    std::vector<std::uint64_t> seeds;
    EpisodeConfig episode_template;
    KernelHyper gp_hyper;
    RewardNorm norm;
};

struct ResultRow {
    std::string world;
    std::string objective;
    std::string policy;
    std::uint64_t seed = 0;
    double final_reward = 0.0;
    long generator_calls = 0;
};

struct AggregateRow {
    std::string objective;
    std::string policy;
    int n = 0;
    double mean = 0.0;
    double stddev = 0.0;
};

struct SignTestRow {
    std::string objective;
    std::string policy_a;
    std::string policy_b;
    int wins_a = 0;
    int wins_b = 0;
    int ties = 0;
    double p_one_sided = 1.0;  // P[a wins this often by chance]
};

struct ExperimentResults {
    std::vector<ResultRow> rows;
    std::vector<AggregateRow> aggregates;
    std::vector<SignTestRow> sign_tests;
    std::vector<EpisodeLog> logs;
    std::vector<std::string> cell_errors;
};

// One-sided exact binomial sign test: P[Binomial(n, 1/2) >= wins_a].
inline double sign_test_p(int wins_a, int n) {
    if (n <= 0) return 1.0;
    double p = 0.0;
    for (int k = wins_a; k <= n; ++k) {
        const double log_term = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) -
                                std::lgamma(n - k + 1.0) - n * std::log(2.0);
        p += std::exp(log_term);
    }
    return std::min(p, 1.0);
}

inline ExperimentResults run_experiment(const ExperimentMatrix& matrix) {
    if (matrix.worlds.empty() || matrix.objectives.empty() || matrix.policies.empty() ||
        matrix.seeds.empty())
        throw ConfigError("run_experiment: empty matrix");

    ExperimentResults res;
    for (const auto& [world_id, world] : matrix.worlds)
        for (const ObjectiveKind& objective : matrix.objectives)
            for (const PolicySpec& policy : matrix.policies)
                for (std::uint64_t seed : matrix.seeds) {
                    EpisodeConfig cfg = matrix.episode_template;
                    cfg.objective = objective;
                    cfg.rng_seed = seed;
                    const std::string cell = world_id + "/" +
                                             objective_name(objective.tag) + "/" + policy.id() +
                                             "/seed" + std::to_string(seed);
                    try {
                        EpisodeLog log = run_episode(world, policy, cfg, matrix.gp_hyper,
                                                     matrix.norm, world_id);
                        res.rows.push_back({world_id, objective_name(objective.tag),
                                            policy.id(), seed, log.final_cumulative(),
                                            log.total_generator_calls()});
                        res.logs.push_back(std::move(log));
                    } catch (const IppError& e) {
                        res.cell_errors.push_back(cell + ": " + e.what());
                    }
                }

    // mean +- std per (objective, policy)
    std::map<std::pair<std::string, std::string>, WelfordStats> agg;
    for (const ResultRow& r : res.rows) agg[{r.objective, r.policy}].add(r.final_reward);
    for (const auto& [key, stats] : agg)
        res.aggregates.push_back({key.first, key.second, static_cast<int>(stats.count),
                                  stats.mean, std::sqrt(stats.variance())});

    // pairwise per-seed sign tests per objective, pooled over worlds
    for (const ObjectiveKind& objective : matrix.objectives) {
        const std::string obj = objective_name(objective.tag);
        for (std::size_t a = 0; a < matrix.policies.size(); ++a)
            for (std::size_t b = a + 1; b < matrix.policies.size(); ++b) {
                SignTestRow st;
                st.objective = obj;
                st.policy_a = matrix.policies[a].id();
                st.policy_b = matrix.policies[b].id();
                std::map<std::pair<std::string, std::uint64_t>, std::pair<double, double>> cells;
                for (const ResultRow& r : res.rows) {
                    if (r.objective != obj) continue;
                    if (r.policy == st.policy_a) cells[{r.world, r.seed}].first = r.final_reward;
                    if (r.policy == st.policy_b) cells[{r.world, r.seed}].second = r.final_reward;
                }
                for (const auto& [key, pair] : cells) {
                    if (pair.first > pair.second) ++st.wins_a;
                    else if (pair.second > pair.first) ++st.wins_b;
                    else ++st.ties;
                }
                st.p_one_sided = sign_test_p(st.wins_a, st.wins_a + st.wins_b);
                res.sign_tests.push_back(st);
            }
    }
    return res;
}

// ---------------------------------------------------------------------------
// CSV output. %.17g everywhere so reloads are exact and reruns byte-identical.

namespace detail {
inline std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}
}  // namespace detail

inline void write_episode_csv(const EpisodeLog& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("write_episode_csv: cannot open " + path);
    out << "# seed=" << log.seed << " objective=" << log.objective
        << " world=" << log.world_spec << " policy=" << log.policy_id << "\n";
    out << "step,cell_x,cell_y,cell_z,rollouts,gamma,ttest,depth,chain_len,samples_added,"
           "r_env,shaped,cumulative,gc\n";
    for (const auto& s : log.steps) {
        out << s.step << ',' << s.cell.x() << ',' << s.cell.y() << ',' << s.cell.z() << ','
            << s.params.num_rollouts << ',' << detail::fmt(s.params.gamma) << ','
            << detail::fmt(s.params.ttest_value) << ',' << s.params.max_depth << ','
            << s.chain_len << ',' << s.samples_added << ',' << detail::fmt(s.r_env) << ','
            << detail::fmt(s.shaped) << ',' << detail::fmt(s.cumulative) << ',' << s.gc << '\n';
    }
    if (!out) throw IoError("write_episode_csv: write failed for " + path);
}

inline EpisodeLog read_episode_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("read_episode_csv: cannot open " + path);
    EpisodeLog log;
    std::string line;
    if (!std::getline(in, line) || line.rfind("# seed=", 0) != 0)
        throw ParseError(path + ":1: missing episode header");
    {
        std::stringstream ss(line.substr(2));
        std::string tok;
        while (ss >> tok) {
            const auto eq = tok.find('=');
            if (eq == std::string::npos) continue;
            const std::string key = tok.substr(0, eq), value = tok.substr(eq + 1);
            if (key == "seed") log.seed = std::stoull(value);
            else if (key == "objective") log.objective = value;
            else if (key == "world") log.world_spec = value;
            else if (key == "policy") log.policy_id = value;
        }
    }
    std::getline(in, line);  // column header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tok;
        std::vector<std::string> toks;
        while (std::getline(ss, tok, ',')) toks.push_back(tok);
        if (toks.size() != 14) throw ParseError(path + ": malformed step row");
        EnvStepRecord s;
        s.step = std::stoi(toks[0]);
        s.cell = Idx3(std::stoi(toks[1]), std::stoi(toks[2]), std::stoi(toks[3]));
        s.params.num_rollouts = std::stoi(toks[4]);
        s.params.gamma = std::stod(toks[5]);
        s.params.ttest_value = std::stod(toks[6]);
        s.params.max_depth = std::stoi(toks[7]);
        s.chain_len = std::stoi(toks[8]);
        s.samples_added = std::stoi(toks[9]);
        s.r_env = std::stod(toks[10]);
        s.shaped = std::stod(toks[11]);
        s.cumulative = std::stod(toks[12]);
        s.gc = std::stol(toks[13]);
        log.steps.push_back(s);
    }
    return log;
}

inline void write_results_csv(const ExperimentResults& res, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("write_results_csv: cannot open " + path);
    out << "world,objective,policy,seed,final_reward,generator_calls\n";
    for (const auto& r : res.rows)
        out << r.world << ',' << r.objective << ',' << r.policy << ',' << r.seed << ','
            << detail::fmt(r.final_reward) << ',' << r.generator_calls << '\n';
}

inline void write_aggregates_csv(const ExperimentResults& res, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("write_aggregates_csv: cannot open " + path);
    out << "objective,policy,n,mean,stddev\n";
    for (const auto& a : res.aggregates)
        out << a.objective << ',' << a.policy << ',' << a.n << ',' << detail::fmt(a.mean) << ','
            << detail::fmt(a.stddev) << '\n';
    out << "objective,policy_a,policy_b,wins_a,wins_b,ties,p_one_sided\n";
    for (const auto& s : res.sign_tests)
        out << s.objective << ',' << s.policy_a << ',' << s.policy_b << ',' << s.wins_a << ','
            << s.wins_b << ',' << s.ties << ',' << detail::fmt(s.p_one_sided) << '\n';
}

inline void write_training_log_csv(const std::vector<TrainLogRow>& log,
                                   const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("write_training_log_csv: cannot open " + path);
    out << "update,mean_shaped_return,mean_env_return,policy_loss,value_loss,clip_frac,"
           "entropy\n";
    for (const auto& r : log)
        out << r.update << ',' << detail::fmt(r.mean_shaped_return) << ','
            << detail::fmt(r.mean_env_return) << ',' << detail::fmt(r.policy_loss) << ','
            << detail::fmt(r.value_loss) << ',' << detail::fmt(r.clip_frac) << ','
            << detail::fmt(r.entropy) << '\n';
}

// ---------------------------------------------------------------------------
// SVG plots (hand-rolled, plain polylines).

namespace detail {

struct Series {
    std::string label;
    std::vector<double> mean, lo, hi;  // per step
};

inline std::string svg_color(std::size_t i) {
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b"};
    return palette[i % 6];
}

inline void svg_plot(std::ostream& out, const std::vector<Series>& series,
                     const std::string& title, double x0, double y0, double w, double h) {
    double vmin = 0.0, vmax = 1.0;
    std::size_t steps = 0;
    bool first = true;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.mean.size(); ++i) {
            const double lo = s.lo.empty() ? s.mean[i] : s.lo[i];
            const double hi = s.hi.empty() ? s.mean[i] : s.hi[i];
            if (first) {
                vmin = lo;
                vmax = hi;
                first = false;
            }
            vmin = std::min(vmin, lo);
            vmax = std::max(vmax, hi);
            steps = std::max(steps, s.mean.size());
        }
    if (vmax - vmin < 1e-12) vmax = vmin + 1.0;
    const auto px = [&](std::size_t i) {
        return x0 + (steps > 1 ? w * static_cast<double>(i) / (steps - 1) : 0.0);
    };
    const auto py = [&](double v) { return y0 + h - h * (v - vmin) / (vmax - vmin); };

    out << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << w << "\" height=\"" << h
        << "\" fill=\"none\" stroke=\"#999\"/>\n";
    out << "<text x=\"" << x0 + 4 << "\" y=\"" << y0 - 6 << "\" font-size=\"12\">" << title
        << "</text>\n";
    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const std::string color = svg_color(si);
        if (!s.lo.empty()) {
            out << "<polygon fill=\"" << color << "\" opacity=\"0.15\" points=\"";
            for (std::size_t i = 0; i < s.mean.size(); ++i)
                out << px(i) << ',' << py(s.hi[i]) << ' ';
            for (std::size_t i = s.mean.size(); i-- > 0;)
                out << px(i) << ',' << py(s.lo[i]) << ' ';
            out << "\"/>\n";
        }
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < s.mean.size(); ++i) out << px(i) << ',' << py(s.mean[i]) << ' ';
        out << "\"/>\n";
        out << "<text x=\"" << x0 + w - 140 << "\" y=\"" << y0 + 14 + 14 * si
            << "\" font-size=\"11\" fill=\"" << color << "\">" << s.label << "</text>\n";
    }
}

inline std::vector<Series> per_policy_series(
    const std::vector<EpisodeLog>& logs,
    const std::function<double(const EnvStepRecord&)>& value) {
    std::map<std::string, std::vector<const EpisodeLog*>> by_policy;
    for (const auto& log : logs) by_policy[log.policy_id].push_back(&log);
    std::vector<Series> out;
    for (const auto& [policy, group] : by_policy) {
        std::size_t steps = 0;
        for (const auto* log : group) steps = std::max(steps, log->steps.size());
        Series s;
        s.label = policy;
        for (std::size_t i = 0; i < steps; ++i) {
            WelfordStats stats;
            double lo = 0.0, hi = 0.0;
            bool first = true;
            for (const auto* log : group) {
                if (i >= log->steps.size()) continue;
                const double v = value(log->steps[i]);
                stats.add(v);
                if (first) {
                    lo = hi = v;
                    first = false;
                }
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            s.mean.push_back(stats.mean);
            s.lo.push_back(lo);
            s.hi.push_back(hi);
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace detail

inline void write_reward_svg(const std::vector<EpisodeLog>& logs, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("write_reward_svg: cannot open " + path);
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"420\">\n";
    const auto series = detail::per_policy_series(
        logs, [](const EnvStepRecord& s) { return s.cumulative; });
    detail::svg_plot(out, series, "cumulative environment reward vs step", 50, 30, 560, 360);
    out << "</svg>\n";
    if (!out) throw IoError("write_reward_svg: write failed for " + path);
}

inline void write_params_svg(const std::vector<EpisodeLog>& logs, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("write_params_svg: cannot open " + path);
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"840\">\n";
    struct Panel {
        const char* title;
        std::function<double(const EnvStepRecord&)> value;
    };
    const Panel panels[] = {
        {"rollouts vs step", [](const EnvStepRecord& s) { return double(s.params.num_rollouts); }},
        {"gamma vs step", [](const EnvStepRecord& s) { return s.params.gamma; }},
        {"t-test value vs step", [](const EnvStepRecord& s) { return s.params.ttest_value; }},
        {"planning depth vs step", [](const EnvStepRecord& s) { return double(s.params.max_depth); }},
    };
    double y = 30;
    for (const auto& panel : panels) {
        detail::svg_plot(out, detail::per_policy_series(logs, panel.value), panel.title, 50, y,
                         560, 160);
        y += 200;
    }
    out << "</svg>\n";
    if (!out) throw IoError("write_params_svg: write failed for " + path);
}

// Writes per-episode CSVs, aggregate CSVs and the two SVG plots.
// Returns the list of files written; empty logs produce no files.
inline std::vector<std::string> emit_outputs(const ExperimentResults& res,
                                             const std::string& out_dir,
                                             std::string* notice = nullptr) {
    if (res.logs.empty()) {
        if (notice) *notice = "NoData: no episode logs, nothing written";
        return {};
    }
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("emit_outputs: cannot create " + out_dir);

    std::vector<std::string> files;
    for (const auto& log : res.logs) {
        const std::string name = "episode_" + log.world_spec + "_" + log.objective + "_" +
                                 log.policy_id + "_" + std::to_string(log.seed) + ".csv";
        const std::string path = out_dir + "/" + name;
        write_episode_csv(log, path);
        files.push_back(path);
    }
    write_results_csv(res, out_dir + "/results.csv");
    files.push_back(out_dir + "/results.csv");
    write_aggregates_csv(res, out_dir + "/aggregates.csv");
    files.push_back(out_dir + "/aggregates.csv");
    write_reward_svg(res.logs, out_dir + "/reward.svg");
    files.push_back(out_dir + "/reward.svg");
    write_params_svg(res.logs, out_dir + "/params.svg");
    files.push_back(out_dir + "/params.svg");
    return files;
}

}  // namespace ipp
