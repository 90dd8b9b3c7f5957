#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "t2s/tensor.hpp"

namespace t2s {

struct PoolBudget {
    std::int64_t j = 1;   // rows granted to each task, per layer
    double mu = 0.5;      // cap fraction: a task may share at most floor(mu*j) rows
    std::int64_t n = 1;   // pool capacity at construction
    bool refill = true;   // top up truncated selections from unused rows
};

// One attention sublayer's parameter-token pools. Masks index rows of both
// tensors at once; keys double as the similarity targets for selection.
struct LayerPool {
    std::string name;
    Tensor keys;    // [n, d_in]
    Tensor values;  // [n, d_out]
    double key_std = 0.0;
    double value_std = 0.0;
};

// Row sets are kept sorted ascending; rows is always shared ∪ specific.
struct TaskLayerMask {
    std::vector<std::int64_t> rows;
    std::vector<std::int64_t> shared;
    std::vector<std::int64_t> specific;
};

struct TaskMask {
    int task_id = 0;
    std::vector<TaskLayerMask> layers;
};

// Cosine similarity of e against every key row. Zero-norm rows score 0.
std::vector<double> cosine_similarities(const std::vector<double>& e, const Tensor& keys);

// Indices of the j largest similarities, ties to the lowest row index;
// returned sorted ascending.
std::vector<std::int64_t> top_j_by_similarity(const std::vector<double>& sims, std::int64_t j);

std::vector<std::int64_t> select_tokens(const std::vector<double>& e, const Tensor& keys,
                                        std::int64_t j);

// Decomposes a selected row set against the usage mask: rows already in use
// become shared (truncated to the floor(mu*j) highest-similarity ones), the
// rest stay specific, and vacated slots are refilled from the
// highest-similarity unused rows so the mask keeps exactly j rows. With
// refill disabled the mask may come back smaller than j.
TaskLayerMask split_shared_specific(const std::vector<std::int64_t>& selected,
                                    const std::vector<std::uint8_t>& used, double mu,
                                    std::int64_t j, const std::vector<double>& sims,
                                    bool refill);

// Deterministic pseudo-random j-subset of [0, n), keyed by (k, seed).
std::vector<std::int64_t> mask_by_task_id(int k, std::int64_t j, std::int64_t n,
                                          std::uint64_t seed);

// Deterministic pseudo-random priority in [0,1) for ranking rows when no
// similarity signal exists (task-id mode).
double row_priority(std::uint64_t seed, std::int64_t row);

// All per-layer pools of one policy plus the usage masks and the task-mask
// registry. Mutation (registration, growth) is single-threaded by contract.
class PoolSet {
public:
    explicit PoolSet(std::uint64_t seed) : seed_(seed) {}

    void add_layer(const std::string& name, std::int64_t d_in, std::int64_t d_out,
                   std::int64_t n, double key_std, double value_std);

    std::size_t layer_count() const { return layers_.size(); }
    LayerPool& layer(std::size_t i) { return layers_[i]; }
    const LayerPool& layer(std::size_t i) const { return layers_[i]; }
    std::int64_t capacity() const { return capacity_; }

    const std::vector<std::uint8_t>& used_mask(std::size_t layer) const {
        return used_[layer];
    }
    std::int64_t used_count(std::size_t layer) const;
    std::int64_t used_count_total() const;

    // Instruction embedding adapted to one layer's key width: identity when
    // the widths already agree, otherwise a fixed seeded random projection
    // (re-normalized). Same pool seed, same projection, forever.
    std::vector<double> project_embedding(std::size_t layer,
                                          const std::vector<double>& e) const;

    // Per-layer language-guided mask. first_task selects without splitting
    // (everything specific); later tasks split against the usage masks.
    TaskMask build_mask_language(int task_id, const std::vector<double>& e,
                                 const PoolBudget& budget, bool first_task) const;

    // Ablation: selection keyed by task id only, priorities replacing
    // similarities for the split.
    TaskMask build_mask_by_id(int task_id, std::uint64_t seed, const PoolBudget& budget,
                              bool first_task) const;

    // Validates the TaskMask invariants, ORs it into the usage masks and
    // stores it for later evaluation.
    void register_task(const TaskMask& mask, const PoolBudget& budget, bool first_task);

    // Stores and ORs without invariant validation (reused-mask ablations).
    void store_mask_unchecked(const TaskMask& mask);

    bool has_task(int task_id) const { return registry_.count(task_id) > 0; }
    const TaskMask& task_mask(int task_id) const;
    const std::map<int, TaskMask>& registry() const { return registry_; }

    // Appends extra randomly-initialized rows to every layer. Existing rows,
    // masks and any masked computation are untouched.
    void extend(std::int64_t extra_rows);

    std::uint64_t seed() const { return seed_; }
    std::int64_t growth_count() const { return growths_; }

    // Checkpoint restore hooks: overwrite registry/usage state wholesale.
    void restore_registry(std::map<int, TaskMask> registry,
                          std::vector<std::vector<std::uint8_t>> used);

    // Overwrites one layer's tensors from raw row-major data. rows may
    // exceed the current capacity (recorded growth); call restore_growth
    // afterwards so future extensions replay the original stream.
    void restore_layer_data(std::size_t layer, const std::vector<double>& keys,
                            const std::vector<double>& values, std::int64_t rows);
    void restore_growth(std::int64_t growth_count);

private:
    std::uint64_t seed_;
    std::int64_t capacity_ = 0;
    std::int64_t growths_ = 0;
    std::vector<LayerPool> layers_;
    std::vector<std::vector<std::uint8_t>> used_;
    std::map<int, TaskMask> registry_;
};

}  // namespace t2s
