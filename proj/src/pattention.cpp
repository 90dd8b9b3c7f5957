#include "t2s/pattention.hpp"

#include <algorithm>
#include <cmath>

#include "t2s/errors.hpp"
#include "t2s/ops.hpp"

namespace t2s {

Tensor pattention_forward(const Tensor& x, const Tensor& k, const Tensor& v) {
    if (k.rank() != 2 || v.rank() != 2) {
        throw ShapeError("pattention_forward: pools must be 2-D");
    }
    if (k.dim(0) == 0) throw EmptyPoolError("pattention_forward: no parameter tokens");
    if (k.dim(0) != v.dim(0)) {
        throw ShapeError("pattention_forward: key and value row counts disagree");
    }
    return ops::matmul(ops::softmax_rows(ops::matmul_nt(x, k)), v);
}

Tensor pattention_forward_split(const Tensor& x, const Tensor& k_sh, const Tensor& v_sh,
                                const Tensor& k_sp, const Tensor& v_sp) {
    const std::int64_t msh = k_sh.defined() && k_sh.rank() == 2 ? k_sh.dim(0) : 0;
    const std::int64_t msp = k_sp.defined() && k_sp.rank() == 2 ? k_sp.dim(0) : 0;
    if (msh + msp == 0) {
        throw EmptyPoolError("pattention_forward_split: both row sets are empty");
    }
    if (msh == 0) return pattention_forward(x, k_sp, v_sp);
    if (msp == 0) return pattention_forward(x, ops::detach(k_sh), ops::detach(v_sh));

    Tensor s_sh = ops::matmul_nt(x, ops::detach(k_sh));
    Tensor s_sp = ops::matmul_nt(x, k_sp);
    Tensor sm = ops::softmax_rows(ops::concat_cols(s_sh, s_sp));
    Tensor a_sh = ops::slice_cols(sm, 0, msh);
    Tensor a_sp = ops::slice_cols(sm, msh, msp);
    return ops::add(ops::matmul(a_sh, ops::detach(v_sh)), ops::matmul(a_sp, v_sp));
}

Tensor pattention_apply(const LayerPool& pool, const TaskLayerMask& mask, const Tensor& x,
                        ForwardMode mode) {
    if (mode == ForwardMode::Unified) {
        if (mask.rows.empty()) {
            throw EmptyPoolError("pattention_apply: empty mask for layer " + pool.name);
        }
        return pattention_forward(x, ops::gather_rows(pool.keys, mask.rows),
                                  ops::gather_rows(pool.values, mask.rows));
    }
    std::vector<std::int64_t> overlap;
    std::set_intersection(mask.shared.begin(), mask.shared.end(), mask.specific.begin(),
                          mask.specific.end(), std::back_inserter(overlap));
    if (!overlap.empty()) {
        throw ContractError("pattention_apply: shared and specific rows overlap in layer " +
                            pool.name);
    }
    if (mask.shared.empty() && mask.specific.empty()) {
        throw EmptyPoolError("pattention_apply: empty mask for layer " + pool.name);
    }
    const std::int64_t dk = pool.keys.dim(1), dv = pool.values.dim(1);
    Tensor ksh = mask.shared.empty() ? Tensor::zeros({0, dk})
                                     : ops::gather_rows(pool.keys, mask.shared);
    Tensor vsh = mask.shared.empty() ? Tensor::zeros({0, dv})
                                     : ops::gather_rows(pool.values, mask.shared);
    Tensor ksp = mask.specific.empty() ? Tensor::zeros({0, dk})
                                       : ops::gather_rows(pool.keys, mask.specific);
    Tensor vsp = mask.specific.empty() ? Tensor::zeros({0, dv})
                                       : ops::gather_rows(pool.values, mask.specific);
    return pattention_forward_split(x, ksh, vsh, ksp, vsp);
}

Tensor TpstBlock::forward(const PoolSet& pools, const TaskMask& mask, const Tensor& x,
                          ForwardMode mode) const {
    const std::size_t expected = token_mixing ? 5 : 1;
    if (sublayers.size() != expected) {
        throw ContractError("TpstBlock: sublayer count does not match the mixing flag");
    }
    const std::int64_t d = x.dim(x.rank() - 1);
    Tensor h = x;
    auto sub = [&](std::size_t which, const Tensor& in) {
        const std::size_t li = sublayers[which];
        return pattention_apply(pools.layer(li), mask.layers[li], in, mode);
    };
    std::size_t ffn_slot = 0;
    if (token_mixing) {
        if (heads < 1 || d % heads != 0) {
            throw ContractError("TpstBlock: head count must divide the model width");
        }
        Tensor xn = ops::rms_normalize(h);
        Tensor q = sub(0, xn);
        Tensor k = sub(1, xn);
        Tensor v = sub(2, xn);
        Tensor mixed;
        if (heads == 1) {
            Tensor att = ops::softmax_rows(
                ops::scale(ops::matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(d))));
            mixed = ops::matmul(att, v);
        } else {
            const std::int64_t dh = d / heads;
            const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
            for (int hh = 0; hh < heads; ++hh) {
                Tensor qh = ops::slice_cols(q, hh * dh, dh);
                Tensor kh = ops::slice_cols(k, hh * dh, dh);
                Tensor vh = ops::slice_cols(v, hh * dh, dh);
                Tensor att = ops::softmax_rows(ops::scale(ops::matmul_nt(qh, kh), inv));
                Tensor oh = ops::matmul(att, vh);
                mixed = hh == 0 ? oh : ops::concat_cols(mixed, oh);
            }
        }
        h = ops::add(h, sub(3, mixed));
        ffn_slot = 4;
    }
    Tensor ffn = sub(ffn_slot, ops::rms_normalize(h));
    return ops::add(h, ffn);
}

}  // namespace t2s
