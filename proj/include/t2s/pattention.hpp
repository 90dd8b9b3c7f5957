#pragma once

#include <cstdint>
#include <vector>

#include "t2s/tensor.hpp"
#include "t2s/tokenpool.hpp"

namespace t2s {

enum class ForwardMode { Unified, Split };

// out = softmax_rows(X . K^T) . V  with X [T,d1] or [B,T,d1], K [m,d1], V [m,d2].
Tensor pattention_forward(const Tensor& x, const Tensor& k, const Tensor& v);

// Same attention but the score axis is the concatenation of shared and
// specific parameter tokens under one joint softmax. Shared keys and values
// enter through detach, so the backward sweep reaches only the specific rows.
Tensor pattention_forward_split(const Tensor& x, const Tensor& k_sh, const Tensor& v_sh,
                                const Tensor& k_sp, const Tensor& v_sp);

// Gathers the masked rows of one pool and applies Pattention in the
// requested mode.
Tensor pattention_apply(const LayerPool& pool, const TaskLayerMask& mask, const Tensor& x,
                        ForwardMode mode);

// Pre-norm residual block. With token mixing the first sublayer is
// self-attention over the input tokens whose q/k/v/output projections are
// Pattention calls; without it the block degenerates to the tokenized FFN.
// All learnable state lives in the referenced pools.
struct TpstBlock {
    bool token_mixing = true;
    int heads = 1;
    // PoolSet layer indices: q,k,v,o then ffn; just ffn when mixing is off.
    std::vector<std::size_t> sublayers;

    Tensor forward(const PoolSet& pools, const TaskMask& mask, const Tensor& x,
                   ForwardMode mode) const;
};

}  // namespace t2s
