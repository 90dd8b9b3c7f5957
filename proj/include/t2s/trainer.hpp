#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "t2s/metrics.hpp"
#include "t2s/optim.hpp"
#include "t2s/policy.hpp"
#include "t2s/tasksuite.hpp"

namespace t2s {

enum class RunMode {
    T2s,               // language-guided selection, shared rows detached and frozen
    NaiveIndependent,  // fresh rows every task, no sharing
    TaskId,            // selection keyed by task id instead of language
    Sequential,        // one fixed row set fine-tuned across all tasks
};

RunMode run_mode_from_string(const std::string& s);
const char* run_mode_name(RunMode mode);

struct LifelongRunConfig {
    SuiteParams suite;
    PolicyConfig policy;
    OptimizerConfig optim;
    RunMode mode = RunMode::T2s;
    int demos_per_task = 5;
    int epochs = 10;
    int batch = 32;
    int eval_episodes = 10;
    std::vector<int> order;  // empty = training order 0..K-1, else a permutation
    double divergence_guard = 1e6;
    NbtConvention nbt_convention = NbtConvention::ExcludeFinal;
    std::uint64_t seed = 1;  // master seed; overrides suite.seed and policy.seed
};

// One row of the token-usage ledger plus the per-task training diagnostics.
struct TaskReport {
    int position = 0;  // 0-based slot in the training order
    int task_id = 0;
    std::string instruction;
    std::int64_t selected_rows = 0;   // sum over layers of |mask rows|
    std::int64_t shared_rows = 0;     // sum over layers of |shared|
    std::int64_t trainable_rows = 0;  // rows the optimizer was allowed to move
    std::int64_t used_rows_after = 0; // pool-wide usage count once registered
    double fwt_one_epoch = 0.0;       // success after exactly one epoch
    double first_loss = 0.0;
    double final_loss = 0.0;
};

struct LifelongResult {
    explicit LifelongResult(SuccessMatrix m) : matrix(std::move(m)) {}

    SuccessMatrix matrix;
    std::vector<TaskReport> reports;
    double fwt = 0.0;
    double auc = 0.0;
    bool nbt_defined = false;  // false for single-task runs
    double nbt = 0.0;
    std::vector<double> nbt_m;
    std::vector<double> auc_m;
    std::int64_t used_rows_total = 0;
    std::int64_t pool_rows_per_layer = 0;
    std::uint64_t config_hash = 0;
};

struct LayerState {
    std::string name;
    std::int64_t rows = 0, d_in = 0, d_out = 0;
    std::vector<double> keys, values;
    std::vector<std::uint8_t> used;
};

// Task-boundary snapshot. Optimizer state is reset at task boundaries, so a
// boundary snapshot needs no moments; RNG streams are derived from
// (seed, task, purpose) labels, so the seed and growth counter are the whole
// random state.
struct Checkpoint {
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    int total_tasks = 0;
    int completed = 0;
    std::int64_t growth_count = 0;
    std::vector<LayerState> layers;
    std::map<int, TaskMask> registry;
    std::vector<TaskReport> reports;
    std::vector<std::vector<double>> matrix_rows;  // row p holds p+1 entries
};

// Key-sorted key=value dump of every field that affects a run.
std::string canonical_config_text(const LifelongRunConfig& cfg);
std::uint64_t config_hash(const LifelongRunConfig& cfg);

// Wraps a policy's greedy action for the rollout loop: keeps the most recent
// window of the history. The policy must outlive the actor.
Actor make_policy_actor(Policy& policy, const std::vector<double>& e, int task_id);

class LifelongTrainer {
public:
    explicit LifelongTrainer(const LifelongRunConfig& cfg);
    LifelongTrainer(const LifelongRunConfig& cfg, const Checkpoint& ck);

    const LifelongRunConfig& config() const { return cfg_; }
    const std::vector<Task>& suite() const { return suite_; }
    const std::vector<int>& order() const { return order_; }
    Policy& policy() { return policy_; }
    const SuccessMatrix& matrix() const { return matrix_; }
    const std::vector<TaskReport>& reports() const { return reports_; }

    int total() const { return static_cast<int>(suite_.size()); }
    int completed() const { return completed_; }
    bool done() const { return completed_ == total(); }

    // Trains the next task in order: mask selection, registration, epochs of
    // behavior cloning (success probe after epoch one), then evaluation of
    // every task trained so far into the matrix row.
    TaskReport train_next_task();

    // Success rate of an already-trained position under its stored mask.
    double evaluate_position(int position);

    LifelongResult result();  // requires done()
    Checkpoint snapshot() const;

private:
    TaskMask build_mask(int position, const Task& task, const std::vector<double>& e);

    LifelongRunConfig cfg_;
    std::vector<Task> suite_;
    std::vector<int> order_;
    Policy policy_;
    SuccessMatrix matrix_;
    std::vector<TaskReport> reports_;
    int completed_ = 0;
};

LifelongResult run_lifelong(const LifelongRunConfig& cfg);

// Atomic (write-temp, rename) versioned binary snapshot.
void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace t2s
