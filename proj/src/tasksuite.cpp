#include "t2s/tasksuite.hpp"

#include <algorithm>
#include <cmath>

#include "t2s/errors.hpp"

namespace t2s {

namespace {

const std::vector<std::string> kColors{"red", "blue", "green", "yellow", "purple"};

struct Region {
    const char* name;
    double cx, cy;
};
const std::vector<Region> kRegions{
    {"left zone", 0.15, 0.5},
    {"right zone", 0.85, 0.5},
    {"top zone", 0.5, 0.85},
    {"bottom zone", 0.5, 0.15},
};

double clip01(double x) { return std::min(1.0, std::max(0.0, x)); }

double clamp_mag(double x, double m) { return std::min(m, std::max(-m, x)); }

double dist(double ax, double ay, double bx, double by) {
    return std::hypot(ax - bx, ay - by);
}

}  // namespace

std::vector<Task> make_suite(const SuiteParams& params) {
    if (params.K < 1) throw SuiteError("make_suite: K must be >= 1");
    const int n_reach = params.K / 3;  // tasks 3, 6, 9, ...
    const int n_push = params.K - n_reach;
    if (n_reach > static_cast<int>(kRegions.size())) {
        throw SuiteError("make_suite: not enough reach templates for K=" +
                         std::to_string(params.K));
    }
    if (n_push > static_cast<int>(kColors.size() * kRegions.size())) {
        throw SuiteError("make_suite: not enough push templates for K=" +
                         std::to_string(params.K));
    }

    Rng rng = make_rng(mix_seed(params.seed, "suite"));
    std::vector<std::pair<int, int>> push_combos;  // (color, region)
    for (std::size_t c = 0; c < kColors.size(); ++c) {
        for (std::size_t r = 0; r < kRegions.size(); ++r) {
            push_combos.emplace_back(static_cast<int>(c), static_cast<int>(r));
        }
    }
    for (std::size_t i = 0; i + 1 < push_combos.size(); ++i) {
        const std::size_t k =
            i + uniform_index(rng, static_cast<std::uint64_t>(push_combos.size() - i));
        std::swap(push_combos[i], push_combos[k]);
    }
    std::vector<int> reach_combos{0, 1, 2, 3};
    for (std::size_t i = 0; i + 1 < reach_combos.size(); ++i) {
        const std::size_t k =
            i + uniform_index(rng, static_cast<std::uint64_t>(reach_combos.size() - i));
        std::swap(reach_combos[i], reach_combos[k]);
    }

    std::vector<Task> suite;
    std::size_t pi = 0, ri = 0;
    for (int k = 1; k <= params.K; ++k) {
        Task t;
        t.id = k;
        t.eps = params.eps;
        Rng jrng = make_rng(mix_seed(params.seed, "goal-jitter", static_cast<std::uint64_t>(k)));
        if (k % 3 == 0) {
            t.kind = TaskKind::Reach;
            const Region& reg = kRegions[static_cast<std::size_t>(reach_combos[ri++])];
            t.region = reg.name;
            t.instruction = "reach the " + t.region + " marker";
            t.goal_x = reg.cx + uniform_range(jrng, -params.goal_jitter, params.goal_jitter);
            t.goal_y = reg.cy + uniform_range(jrng, -params.goal_jitter, params.goal_jitter);
        } else {
            t.kind = TaskKind::Push;
            const auto [ci, rgi] = push_combos[pi++];
            t.color = kColors[static_cast<std::size_t>(ci)];
            const Region& reg = kRegions[static_cast<std::size_t>(rgi)];
            t.region = reg.name;
            t.instruction = "push the " + t.color + " block to the " + t.region;
            t.goal_x = reg.cx + uniform_range(jrng, -params.goal_jitter, params.goal_jitter);
            t.goal_y = reg.cy + uniform_range(jrng, -params.goal_jitter, params.goal_jitter);
        }
        suite.push_back(std::move(t));
    }
    return suite;
}

SimState sample_initial_state(const Task& task, Rng& rng, const SuiteParams& params) {
    SimState s;
    s.agent_x = uniform_range(rng, params.agent_lo, params.agent_hi);
    s.agent_y = uniform_range(rng, params.agent_lo, params.agent_hi);
    if (task.kind == TaskKind::Push) {
        s.object_x = uniform_range(rng, params.object_lo, params.object_hi);
        s.object_y = uniform_range(rng, params.object_lo, params.object_hi);
    }
    return s;
}

std::vector<double> observe(const SimState& state, const Task& task) {
    std::vector<double> o(kObservationDim, 0.0);
    o[0] = state.agent_x;
    o[1] = state.agent_y;
    if (task.kind == TaskKind::Push) {
        o[2] = state.object_x;
        o[3] = state.object_y;
    }
    o[4] = task.goal_x;
    o[5] = task.goal_y;
    o[6] = task.kind == TaskKind::Reach ? 1.0 : 0.0;
    o[7] = task.kind == TaskKind::Push ? 1.0 : 0.0;
    return o;
}

SimState simulate_step(const SimState& state, std::array<double, 2> action,
                       const Task& task, const SuiteParams& params) {
    if (state.t >= params.horizon) {
        throw EpisodeOverError("simulate_step: episode horizon already reached");
    }
    const double ax = clamp_mag(action[0], params.a_max);
    const double ay = clamp_mag(action[1], params.a_max);
    SimState next = state;
    next.agent_x = clip01(state.agent_x + ax);
    next.agent_y = clip01(state.agent_y + ay);
    if (task.kind == TaskKind::Push) {
        const double d =
            dist(state.agent_x, state.agent_y, state.object_x, state.object_y);
        if (d < params.r_contact) {
            next.object_x = clip01(state.object_x + (next.agent_x - state.agent_x));
            next.object_y = clip01(state.object_y + (next.agent_y - state.agent_y));
        }
    }
    next.t = state.t + 1;
    return next;
}

int goal_predicate(const SimState& state, const Task& task) {
    const double ex = task.kind == TaskKind::Push ? state.object_x : state.agent_x;
    const double ey = task.kind == TaskKind::Push ? state.object_y : state.agent_y;
    return dist(ex, ey, task.goal_x, task.goal_y) <= task.eps ? 1 : 0;
}

std::array<double, 2> expert_action(const SimState& state, const Task& task,
                                    const SuiteParams& params) {
    double tx, ty;
    if (task.kind == TaskKind::Reach) {
        tx = task.goal_x - state.agent_x;
        ty = task.goal_y - state.agent_y;
    } else {
        const double d =
            dist(state.agent_x, state.agent_y, state.object_x, state.object_y);
        if (d < params.r_contact) {
            // dragging: steer the object (and thus the agent) at the goal
            tx = task.goal_x - state.object_x;
            ty = task.goal_y - state.object_y;
        } else {
            tx = state.object_x - state.agent_x;
            ty = state.object_y - state.agent_y;
        }
    }
    return {clamp_mag(tx, params.a_max), clamp_mag(ty, params.a_max)};
}

std::vector<Demonstration> scripted_expert(const Task& task, std::uint64_t seed, int n,
                                           const SuiteParams& params) {
    if (n < 1) throw ContractError("scripted_expert: need at least one demonstration");
    std::vector<Demonstration> demos;
    demos.reserve(static_cast<std::size_t>(n));
    for (int ep = 0; ep < n; ++ep) {
        Rng rng = make_rng(mix_seed(seed, static_cast<std::uint64_t>(task.id),
                                    static_cast<std::uint64_t>(ep)));
        Demonstration demo;
        demo.task_id = task.id;
        SimState s = sample_initial_state(task, rng, params);
        demo.initial = s;
        bool done = goal_predicate(s, task) == 1;
        while (!done) {
            if (s.t >= params.horizon) {
                throw SuiteError("scripted_expert: expert missed the goal on task " +
                                 std::to_string(task.id));
            }
            const std::array<double, 2> a = expert_action(s, task, params);
            demo.observations.push_back(observe(s, task));
            demo.actions.push_back(a);
            s = simulate_step(s, a, task, params);
            done = goal_predicate(s, task) == 1;
        }
        if (demo.actions.empty()) {
            throw SuiteError("scripted_expert: episode satisfied the goal at start");
        }
        demos.push_back(std::move(demo));
    }
    return demos;
}

double evaluate_policy(const Actor& actor, const Task& task, int episodes,
                       std::uint64_t seed, const SuiteParams& params) {
    if (episodes < 1) throw ContractError("evaluate_policy: episodes must be >= 1");
    int successes = 0;
    for (int ep = 0; ep < episodes; ++ep) {
        Rng rng = make_rng(mix_seed(seed, static_cast<std::uint64_t>(task.id),
                                    static_cast<std::uint64_t>(ep)));
        SimState s = sample_initial_state(task, rng, params);
        std::vector<std::vector<double>> history;
        bool hit = goal_predicate(s, task) == 1;
        while (!hit && s.t < params.horizon) {
            history.push_back(observe(s, task));
            s = simulate_step(s, actor(history), task, params);
            hit = goal_predicate(s, task) == 1;
        }
        successes += hit ? 1 : 0;
    }
    return static_cast<double>(successes) / static_cast<double>(episodes);
}

Actor expert_actor(const Task& task, const SuiteParams& params) {
    return [task, params](const std::vector<std::vector<double>>& history) {
        const std::vector<double>& o = history.back();
        SimState s;
        s.agent_x = o[0];
        s.agent_y = o[1];
        s.object_x = o[2];
        s.object_y = o[3];
        return expert_action(s, task, params);
    };
}

}  // namespace t2s
