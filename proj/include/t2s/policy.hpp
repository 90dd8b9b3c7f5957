#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "t2s/pattention.hpp"
#include "t2s/tensor.hpp"
#include "t2s/tokenpool.hpp"

namespace t2s {

struct PolicyConfig {
    std::int64_t blocks = 4;    // TPST blocks
    std::int64_t width = 64;    // model width d
    std::int64_t j = 48;        // pool rows granted per task per layer
    double mu = 0.5;            // shared-row cap fraction
    std::int64_t window = 8;    // observation history length W
    std::int64_t obs_dim = 8;
    std::int64_t d_act = 2;
    std::int64_t capacity = 0;  // pool rows per layer; must be set (>= j)
    int heads = 1;
    bool token_mixing = true;
    bool refill = true;
    std::uint64_t seed = 1;
};

// Most recent observations, oldest first, at most W of them.
using ObservationWindow = std::vector<std::vector<double>>;

struct ParameterCensus {
    std::int64_t trainable_tensors = 0;
    std::int64_t trainable_floats = 0;
    std::int64_t pool_layers = 0;
};

// Behavior-cloning policy: frozen instruction/observation encoders, TPST
// blocks, and a Pattention action head. Every trainable float is a pool row.
class Policy {
public:
    explicit Policy(PolicyConfig cfg);

    const PolicyConfig& config() const { return cfg_; }
    PoolSet& pools() { return pools_; }
    const PoolSet& pools() const { return pools_; }
    PoolBudget budget() const;
    std::size_t head_layer() const { return pools_.layer_count() - 1; }

    // Deterministic surrogate language encoder: hashed words into a fixed
    // Gaussian codebook, averaged and L2-normalized. Width = model width.
    std::vector<double> embed_instruction(const std::string& text) const;

    // Frozen linear projection of one observation to a d-wide token.
    std::vector<double> encode_observation(const std::vector<double>& obs) const;

    // Assembles [instruction token | one token per padded frame] with
    // sinusoidal positional offsets. Constant (never trained), so the result
    // carries no tape.
    Tensor encode_window_batch(const std::vector<ObservationWindow>& windows,
                               const std::vector<double>& e) const;

    // Runs the registered task's mask through the blocks and action head.
    Tensor forward(const std::vector<ObservationWindow>& windows,
                   const std::vector<double>& e, int task_id, ForwardMode mode);

    // Greedy evaluation action for one window; no tape.
    std::array<double, 2> act(const ObservationWindow& window, const std::vector<double>& e,
                              int task_id);

    std::vector<Tensor> trainable_parameters();
    ParameterCensus parameter_census() const;

private:
    PolicyConfig cfg_;
    PoolSet pools_;
    std::vector<TpstBlock> blocks_;
    Tensor obs_proj_;            // [d, obs_dim], frozen
    std::vector<double> pos_;    // [(W+1) * d] sinusoidal offsets, scaled
};

// Mean squared error between predicted and expert action batches.
Tensor bc_loss(const Tensor& pred, const Tensor& target);

}  // namespace t2s
