#include "t2s/gradcheck.hpp"

#include <cmath>
#include <functional>

#include "t2s/ops.hpp"
#include "t2s/pattention.hpp"
#include "t2s/policy.hpp"
#include "t2s/rng.hpp"
#include "t2s/tensor.hpp"
#include "t2s/tokenpool.hpp"

namespace t2s {

namespace {

double rel_err(double analytic, double numeric) {
    const double denom = std::max(1e-8, std::abs(analytic) + std::abs(numeric));
    return std::abs(analytic - numeric) / denom;
}

// Leaves to probe; an empty row list means every element.
struct FdLeaf {
    Tensor t;
    std::vector<std::int64_t> rows;
};

double fd_max_rel_err(std::vector<FdLeaf> leaves, const std::function<Tensor()>& loss_fn) {
    for (FdLeaf& l : leaves) ops::zero_grad(l.t);
    Tensor loss = loss_fn();
    ops::backward(loss);

    constexpr double h = 1e-5;
    double worst = 0.0;
    for (FdLeaf& l : leaves) {
        std::vector<std::int64_t> idx;
        if (l.rows.empty()) {
            idx.resize(static_cast<std::size_t>(l.t.numel()));
            for (std::int64_t i = 0; i < l.t.numel(); ++i) idx[static_cast<std::size_t>(i)] = i;
        } else {
            const std::int64_t w = l.t.dim(1);
            for (std::int64_t r : l.rows)
                for (std::int64_t c = 0; c < w; ++c) idx.push_back(r * w + c);
        }
        for (std::int64_t i : idx) {
            const double saved = l.t.data()[i];
            double fp = 0.0, fm = 0.0;
            {
                NoGradGuard ng;
                l.t.data()[i] = saved + h;
                fp = loss_fn().item();
                l.t.data()[i] = saved - h;
                fm = loss_fn().item();
                l.t.data()[i] = saved;
            }
            worst = std::max(worst, rel_err(l.t.grad()[i], (fp - fm) / (2.0 * h)));
        }
    }
    return worst;
}

}  // namespace

std::vector<GradCheckEntry> run_gradcheck(std::uint64_t seed, double tol) {
    std::vector<GradCheckEntry> out;
    auto record = [&out, tol](const std::string& name, double err) {
        out.push_back({name, err, tol, err < tol});
    };

    {
        Rng rng = make_rng(mix_seed(seed, "gradcheck-pattention"));
        Tensor k = Tensor::randn({10, 6}, rng, 0.4, true);
        Tensor v = Tensor::randn({10, 6}, rng, 0.4, true);
        Tensor x = Tensor::randn({2, 3, 6}, rng, 1.0, true);
        record("pattention", fd_max_rel_err({{k, {}}, {v, {}}, {x, {}}}, [&] {
            return ops::sum(pattention_forward(x, k, v));
        }));
    }

    {
        Rng rng = make_rng(mix_seed(seed, "gradcheck-split"));
        LayerPool pool;
        pool.name = "probe";
        pool.keys = Tensor::randn({10, 6}, rng, 0.4, true);
        pool.values = Tensor::randn({10, 6}, rng, 0.4, true);
        Tensor x = Tensor::randn({2, 3, 6}, rng, 1.0, true);
        TaskLayerMask mask;
        mask.rows = {0, 1, 2, 3, 4, 5, 6, 7};
        mask.shared = {0, 2, 4};
        mask.specific = {1, 3, 5, 6, 7};
        auto loss_fn = [&] { return ops::sum(pattention_apply(pool, mask, x, ForwardMode::Split)); };
        record("pattention-split",
               fd_max_rel_err({{pool.keys, mask.specific}, {pool.values, mask.specific}, {x, {}}},
                              loss_fn));

        ops::zero_grad(pool.keys);
        ops::zero_grad(pool.values);
        Tensor loss = loss_fn();
        ops::backward(loss);
        double shared_grad = 0.0;
        for (std::int64_t r : mask.shared) {
            for (std::int64_t c = 0; c < 6; ++c) {
                shared_grad = std::max(shared_grad, std::abs(pool.keys.grad()[r * 6 + c]));
                shared_grad = std::max(shared_grad, std::abs(pool.values.grad()[r * 6 + c]));
            }
        }
        out.push_back({"split-shared-rows-frozen", shared_grad, 0.0, shared_grad == 0.0});
    }

    {
        Rng rng = make_rng(mix_seed(seed, "gradcheck-block"));
        PoolSet pools(mix_seed(seed, "gradcheck-pools"));
        const double key_std = 1.0 / std::sqrt(6.0);
        for (const char* name : {"q", "k", "v", "o", "ffn"}) {
            pools.add_layer(name, 6, 6, 10, key_std, 0.4);
        }
        TpstBlock block;
        block.token_mixing = true;
        block.heads = 1;
        block.sublayers = {0, 1, 2, 3, 4};
        TaskMask mask;
        mask.task_id = 1;
        for (int li = 0; li < 5; ++li) {
            TaskLayerMask lm;
            lm.rows = {0, 1, 2, 3, 4, 5};
            lm.specific = lm.rows;
            mask.layers.push_back(lm);
        }
        Tensor x = Tensor::randn({2, 3, 6}, rng, 1.0, true);
        std::vector<FdLeaf> leaves;
        for (std::size_t li = 0; li < pools.layer_count(); ++li) {
            leaves.push_back({pools.layer(li).keys, mask.layers[li].rows});
            leaves.push_back({pools.layer(li).values, mask.layers[li].rows});
        }
        leaves.push_back({x, {}});
        record("tpst-block", fd_max_rel_err(std::move(leaves), [&] {
            return ops::sum(block.forward(pools, mask, x, ForwardMode::Unified));
        }));
    }

    {
        Rng rng = make_rng(mix_seed(seed, "gradcheck-loss"));
        Tensor pred = Tensor::randn({4, 2}, rng, 1.0, true);
        Tensor target = Tensor::randn({4, 2}, rng, 1.0, false);
        record("bc-loss", fd_max_rel_err({{pred, {}}}, [&] { return bc_loss(pred, target); }));
    }

    return out;
}

bool gradcheck_passed(const std::vector<GradCheckEntry>& entries) {
    for (const GradCheckEntry& e : entries) {
        if (!e.pass) return false;
    }
    return true;
}

}  // namespace t2s
