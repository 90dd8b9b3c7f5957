#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "t2s/rng.hpp"

namespace t2s {

enum class TaskKind { Reach, Push };

struct SuiteParams {
    int K = 10;
    std::int64_t horizon = 60;
    double eps = 0.05;        // goal radius
    double a_max = 0.05;      // per-axis action clamp
    double r_contact = 0.06;  // drag radius for push tasks
    double agent_lo = 0.30, agent_hi = 0.70;
    double object_lo = 0.35, object_hi = 0.65;
    double goal_jitter = 0.03;
    std::uint64_t seed = 0;
};

struct Task {
    int id = 0;  // 1-based position in the suite
    TaskKind kind = TaskKind::Push;
    std::string color;  // empty for reach tasks
    std::string region;
    std::string instruction;
    double goal_x = 0.0, goal_y = 0.0;
    double eps = 0.05;
};

struct SimState {
    double agent_x = 0.0, agent_y = 0.0;
    double object_x = 0.0, object_y = 0.0;
    std::int64_t t = 0;
};

// One successful expert episode. observations[i] is taken before actions[i];
// the final (post-action) state satisfies the goal predicate.
struct Demonstration {
    int task_id = 0;
    SimState initial;
    std::vector<std::vector<double>> observations;
    std::vector<std::array<double, 2>> actions;
};

inline constexpr std::int64_t kObservationDim = 8;

// K distinct tasks over a shared color/region vocabulary; every third task
// is a reach task, the rest push. Deterministic in params.seed.
std::vector<Task> make_suite(const SuiteParams& params);

SimState sample_initial_state(const Task& task, Rng& rng, const SuiteParams& params);

// [agent xy, object xy (zeros for reach), goal xy, kind one-hot] = 8 floats.
std::vector<double> observe(const SimState& state, const Task& task);

// Kinematic step: per-axis clamp to a_max, workspace clip to [0,1]^2; for
// push tasks the object is dragged by the agent's displacement whenever the
// agent started the step within r_contact of it.
SimState simulate_step(const SimState& state, std::array<double, 2> action,
                       const Task& task, const SuiteParams& params);

// 1 iff the task's target entity lies within the closed eps-ball of the goal.
int goal_predicate(const SimState& state, const Task& task);

// Proportional controller: walk to the object (push only), then steer so the
// target entity heads straight for the goal.
std::array<double, 2> expert_action(const SimState& state, const Task& task,
                                    const SuiteParams& params);

std::vector<Demonstration> scripted_expert(const Task& task, std::uint64_t seed, int n,
                                           const SuiteParams& params);

// An actor sees the full observation history (oldest first) and returns one
// 2-D action.
using Actor = std::function<std::array<double, 2>(const std::vector<std::vector<double>>&)>;

// Mean success over E rollouts with per-episode seeds derived from
// (seed, task.id, episode); success is the max of the goal predicate over
// the episode. A rollout ends early once the goal is hit.
double evaluate_policy(const Actor& actor, const Task& task, int episodes,
                       std::uint64_t seed, const SuiteParams& params);

Actor expert_actor(const Task& task, const SuiteParams& params);

}  // namespace t2s
