#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "ipp/common.hpp"
#include "ipp/gp.hpp"
#include "ipp/objective.hpp"
#include "ipp/stats.hpp"
#include "ipp/world.hpp"

namespace ipp {

// The four planner parameters chosen at every IPP iteration.
struct SolverParams {
    int num_rollouts = 100;   // [10, 300]
    double gamma = 0.9;       // [0.1, 0.99]
    double ttest_value = 0.05;  // [1e-3, 0.4]
    int max_depth = 8;        // [3, 15]

    bool valid() const {
        return num_rollouts >= 10 && num_rollouts <= 300 && gamma >= 0.1 && gamma <= 0.99 &&
               ttest_value >= 1e-3 && ttest_value <= 0.4 && max_depth >= 3 && max_depth <= 15;
    }
    // conservative fixed parameters for the non-learned baseline
    static SolverParams naive() { return SolverParams{100, 0.9, 0.05, 8}; }
};

// Belief carried through the search: GP posterior, known pose, running best mean.
struct Belief {
    GpModel gp;
    RobotPose pose;
    ImprovementState imp;
};

struct PlanContext {
    const WorldField* field = nullptr;  // lattice geometry only; values stay hidden
    SensingConfig sensing;
    ObjectiveKind objective;
};

struct TreeNode {
    int visit_count = 0;
    WelfordStats stats;  // discounted returns credited to this node
    std::array<std::unique_ptr<TreeNode>, 6> children;

    TreeNode* child(Move m) const { return children[static_cast<int>(m)].get(); }
    TreeNode* ensure_child(Move m) {
        auto& slot = children[static_cast<int>(m)];
        if (!slot) slot = std::make_unique<TreeNode>();
        return slot.get();
    }
};

struct GenResult {
    std::vector<double> obs;  // GP posterior mean at each sensed point
    double reward = 0.0;
};

// One simulated transition. Observations are the GP means (deterministic), so
// the belief update is conditioning on the predicted values.
inline GenResult generator_inplace(const PlanContext& ctx, Belief& belief, Move action,
                                   long& generator_calls) {
    const RobotPose next = apply_action(belief.pose, action, *ctx.field);
    const std::vector<Vec3> points = sense_path(ctx.sensing, belief.pose, next, *ctx.field);

    GenResult out;
    const auto preds = belief.gp.condition_on_means(points);
    for (const Prediction& pred : preds) {
        out.reward += score(ctx.objective, pred, belief.imp);
        out.obs.push_back(pred.mean);
    }
    for (double m : out.obs) belief.imp.observe_mean(m);
    belief.pose = next;
    ++generator_calls;
    return out;
}

// Pure-function form used outside the search loop.
inline std::pair<Belief, GenResult> generator(const PlanContext& ctx, const Belief& belief,
                                              Move action, long& generator_calls) {
    Belief next{belief.gp.fork(ctx.sensing.samples_per_edge), belief.pose, belief.imp};
    GenResult r = generator_inplace(ctx, next, action, generator_calls);
    return {std::move(next), std::move(r)};
}

// UCB1 over the legal actions; unvisited actions first, in canonical order.
inline Move ucb1_select(const TreeNode& node, const std::vector<Move>& legal,
                        double exploration_c) {
    for (Move m : legal) {
        const TreeNode* c = node.child(m);
        if (!c || c->visit_count == 0) return m;
    }
    Move best = legal.front();
    double best_score = -std::numeric_limits<double>::infinity();
    const double log_n = std::log(static_cast<double>(std::max(node.visit_count, 1)));
    for (Move m : legal) {
        const TreeNode* c = node.child(m);
        const double score =
            c->stats.mean + exploration_c * std::sqrt(log_n / c->visit_count);
        if (score > best_score) {
            best_score = score;
            best = m;
        }
    }
    return best;
}

// Uniform-random tail simulation; returns the discounted return.
inline double rollout(const PlanContext& ctx, Belief& belief, int depth_remaining, double gamma,
                      Rng& rng, long& generator_calls) {
    double ret = 0.0;
    double disc = 1.0;
    for (int d = 0; d < depth_remaining; ++d) {
        const auto legal = legal_actions(*ctx.field, belief.pose);
        if (legal.empty()) break;
        const Move a = legal[rng.uniform_int(0, static_cast<int>(legal.size()) - 1)];
        const GenResult r = generator_inplace(ctx, belief, a, generator_calls);
        ret += disc * r.reward;
        disc *= gamma;
    }
    return ret;
}

// Best-vs-second-best Welch test at each level; descend while confident.
// The root's best action is always returned even when the test fails there.
// Exact value ties (common when the acquisition floor zeroes a whole
// neighborhood) are broken uniformly at random when an rng is supplied;
// deterministic lowest-index tie-breaking would pin the robot against a wall.
inline std::vector<Move> extract_action_chain(const TreeNode& root, double ttest_value,
                                              int max_depth, Rng* rng = nullptr) {
    std::vector<Move> chain;
    const TreeNode* node = &root;
    while (static_cast<int>(chain.size()) < max_depth) {
        int best = -1, second = -1, n_tied = 0;
        for (int i = 0; i < 6; ++i) {
            const TreeNode* c = node->children[i].get();
            if (!c || c->visit_count == 0) continue;
            if (best < 0 || c->stats.mean > node->children[best]->stats.mean) {
                second = best;
                best = i;
                n_tied = 1;
            } else if (rng && c->stats.mean == node->children[best]->stats.mean) {
                ++n_tied;
                if (rng->uniform_int(1, n_tied) == 1) {
                    second = best;
                    best = i;
                } else if (second < 0 ||
                           c->stats.mean > node->children[second]->stats.mean) {
                    second = i;
                }
            } else if (second < 0 || c->stats.mean > node->children[second]->stats.mean) {
                second = i;
            }
        }
        if (best < 0) break;
        const TreeNode* bc = node->children[best].get();
        const TreeNode* sc = second >= 0 ? node->children[second].get() : nullptr;
        const bool confident = bc->visit_count >= 2 && sc && sc->visit_count >= 2 &&
                               welch_p_value(bc->stats, sc->stats) <= ttest_value;
        if (chain.empty()) {
            chain.push_back(static_cast<Move>(best));
            if (!confident) break;
        } else {
            if (!confident) break;
            chain.push_back(static_cast<Move>(best));
        }
        node = bc;
    }
    return chain;
}

struct PlanResult {
    std::vector<Move> actions;
    long generator_calls = 0;
    std::array<std::pair<double, long>, 6> root_values{};  // per-action (mean, count)
};

// POMCP: UCB1 tree policy, one leaf expansion per simulation, random-rollout
// tail, Welford backup of discounted returns along the path.
inline PlanResult plan(const PlanContext& ctx, const Belief& root_belief,
                       const SolverParams& params, Rng& rng) {
    // basic sanity only; the [10,300] etc. ranges in valid() describe the
    // policy's action space, not a solver limitation
    if (params.num_rollouts < 1 || params.max_depth < 1 || params.gamma <= 0.0 ||
        params.gamma > 1.0 || params.ttest_value <= 0.0)
        throw ConfigError("plan: unusable SolverParams");
    TreeNode root;
    long gc = 0;
    double ret_min = std::numeric_limits<double>::infinity();
    double ret_max = -std::numeric_limits<double>::infinity();

    const int sim_capacity = params.max_depth * ctx.sensing.samples_per_edge;
    for (int sim = 0; sim < params.num_rollouts; ++sim) {
        Belief belief{root_belief.gp.fork(sim_capacity), root_belief.pose, root_belief.imp};
        TreeNode* node = &root;
        std::vector<std::pair<TreeNode*, double>> path;  // (child entered, edge reward)
        int depth = 0;
        while (depth < params.max_depth) {
            const auto legal = legal_actions(*ctx.field, belief.pose);
            if (legal.empty()) break;
            const double c = ret_max > ret_min ? ret_max - ret_min : 1.0;
            const Move a = ucb1_select(*node, legal, c);
            TreeNode* child = node->ensure_child(a);
            const GenResult r = generator_inplace(ctx, belief, a, gc);
            ++depth;
            path.emplace_back(child, r.reward);
            const bool expansion = child->visit_count == 0;
            node = child;
            if (expansion) break;
        }
        double ret = rollout(ctx, belief, params.max_depth - depth, params.gamma, rng, gc);
        for (auto it = path.rbegin(); it != path.rend(); ++it) {
            ret = it->second + params.gamma * ret;
            it->first->stats.add(ret);
            ++it->first->visit_count;
        }
        root.stats.add(ret);
        ++root.visit_count;
        ret_min = std::min(ret_min, ret);
        ret_max = std::max(ret_max, ret);
    }

    PlanResult result;
    result.generator_calls = gc;
    result.actions = extract_action_chain(root, params.ttest_value, params.max_depth, &rng);
    if (result.actions.empty()) {
        const auto legal = legal_actions(*ctx.field, root_belief.pose);
        if (legal.empty()) throw IllegalMove("plan: no legal action from the root pose");
        result.actions.push_back(legal[rng.uniform_int(0, static_cast<int>(legal.size()) - 1)]);
    }
    for (int i = 0; i < 6; ++i) {
        const TreeNode* c = root.children[i].get();
        result.root_values[i] = c ? std::make_pair(c->stats.mean, static_cast<long>(c->visit_count))
                                  : std::make_pair(0.0, 0L);
    }
    return result;
}

}  // namespace ipp
