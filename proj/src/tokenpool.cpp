#include "t2s/tokenpool.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "t2s/errors.hpp"
#include "t2s/rng.hpp"

namespace t2s {

namespace {

std::int64_t share_cap(double mu, std::int64_t j) {
    return static_cast<std::int64_t>(std::floor(mu * static_cast<double>(j) + 1e-9));
}

// sim descending, ties to the lowest index
void rank_rows(std::vector<std::int64_t>& rows, const std::vector<double>& sims) {
    std::sort(rows.begin(), rows.end(), [&](std::int64_t a, std::int64_t b) {
        const double sa = sims[static_cast<std::size_t>(a)];
        const double sb = sims[static_cast<std::size_t>(b)];
        if (sa != sb) return sa > sb;
        return a < b;
    });
}

}  // namespace

std::vector<double> cosine_similarities(const std::vector<double>& e, const Tensor& keys) {
    if (keys.rank() != 2) throw ShapeError("cosine_similarities: keys must be 2-D");
    const std::int64_t n = keys.dim(0), d = keys.dim(1);
    if (static_cast<std::int64_t>(e.size()) != d) {
        throw ShapeError("cosine_similarities: embedding width does not match key width");
    }
    double en = 0.0;
    for (double x : e) en += x * x;
    en = std::sqrt(en);
    std::vector<double> sims(static_cast<std::size_t>(n), 0.0);
    const double* k = keys.data();
    for (std::int64_t i = 0; i < n; ++i) {
        const double* row = k + i * d;
        double dot = 0.0, kn = 0.0;
        for (std::int64_t jx = 0; jx < d; ++jx) {
            dot += e[static_cast<std::size_t>(jx)] * row[jx];
            kn += row[jx] * row[jx];
        }
        const double denom = en * std::sqrt(kn);
        sims[static_cast<std::size_t>(i)] = denom > 1e-300 ? dot / denom : 0.0;
    }
    return sims;
}

std::vector<std::int64_t> top_j_by_similarity(const std::vector<double>& sims, std::int64_t j) {
    const std::int64_t n = static_cast<std::int64_t>(sims.size());
    if (j > n) throw CapacityError("top_j_by_similarity: j exceeds pool size");
    if (j < 1) throw ContractError("top_j_by_similarity: j must be >= 1");
    std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    rank_rows(idx, sims);
    idx.resize(static_cast<std::size_t>(j));
    std::sort(idx.begin(), idx.end());
    return idx;
}

std::vector<std::int64_t> select_tokens(const std::vector<double>& e, const Tensor& keys,
                                        std::int64_t j) {
    return top_j_by_similarity(cosine_similarities(e, keys), j);
}

TaskLayerMask split_shared_specific(const std::vector<std::int64_t>& selected,
                                    const std::vector<std::uint8_t>& used, double mu,
                                    std::int64_t j, const std::vector<double>& sims,
                                    bool refill) {
    const std::int64_t n = static_cast<std::int64_t>(used.size());
    TaskLayerMask out;
    std::vector<std::int64_t> shared, specific;
    for (std::int64_t r : selected) {
        if (r < 0 || r >= n) throw ContractError("split_shared_specific: row out of range");
        (used[static_cast<std::size_t>(r)] ? shared : specific).push_back(r);
    }
    const std::int64_t cap = share_cap(mu, j);
    if (static_cast<std::int64_t>(shared.size()) > cap) {
        rank_rows(shared, sims);
        shared.resize(static_cast<std::size_t>(cap));
    }
    const std::int64_t deficit =
        j - static_cast<std::int64_t>(shared.size()) - static_cast<std::int64_t>(specific.size());
    if (deficit > 0 && refill) {
        std::set<std::int64_t> taken(selected.begin(), selected.end());
        std::vector<std::int64_t> unused;
        for (std::int64_t r = 0; r < n; ++r) {
            if (!used[static_cast<std::size_t>(r)] && !taken.count(r)) unused.push_back(r);
        }
        if (static_cast<std::int64_t>(unused.size()) < deficit) {
            throw CapacityError("split_shared_specific: pool exhausted, " +
                                std::to_string(unused.size()) + " unused rows but " +
                                std::to_string(deficit) + " needed");
        }
        rank_rows(unused, sims);
        specific.insert(specific.end(), unused.begin(), unused.begin() + deficit);
    }
    std::sort(shared.begin(), shared.end());
    std::sort(specific.begin(), specific.end());
    out.shared = std::move(shared);
    out.specific = std::move(specific);
    out.rows = out.shared;
    out.rows.insert(out.rows.end(), out.specific.begin(), out.specific.end());
    std::sort(out.rows.begin(), out.rows.end());
    return out;
}

std::vector<std::int64_t> mask_by_task_id(int k, std::int64_t j, std::int64_t n,
                                          std::uint64_t seed) {
    if (j > n) throw CapacityError("mask_by_task_id: j exceeds pool size");
    if (j < 1) throw ContractError("mask_by_task_id: j must be >= 1");
    Rng rng = make_rng(mix_seed(seed, "task-id-mask", static_cast<std::uint64_t>(k)));
    std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    for (std::int64_t i = 0; i < j; ++i) {
        const std::int64_t pick =
            i + static_cast<std::int64_t>(uniform_index(rng, static_cast<std::uint64_t>(n - i)));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick)]);
    }
    idx.resize(static_cast<std::size_t>(j));
    std::sort(idx.begin(), idx.end());
    return idx;
}

double row_priority(std::uint64_t seed, std::int64_t row) {
    const std::uint64_t h = splitmix64(mix_seed(seed, "row-priority", static_cast<std::uint64_t>(row)));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

void PoolSet::add_layer(const std::string& name, std::int64_t d_in, std::int64_t d_out,
                        std::int64_t n, double key_std, double value_std) {
    if (n < 1) throw ContractError("add_layer: capacity must be >= 1");
    if (!layers_.empty() && n != capacity_) {
        throw ContractError("add_layer: all layers must share one capacity");
    }
    for (const LayerPool& lp : layers_) {
        if (lp.name == name) throw ContractError("add_layer: duplicate layer name " + name);
    }
    capacity_ = n;
    LayerPool lp;
    lp.name = name;
    lp.key_std = key_std;
    lp.value_std = value_std;
    Rng rng = make_rng(mix_seed(seed_, name));
    lp.keys = Tensor::randn({n, d_in}, rng, key_std, true);
    lp.values = Tensor::randn({n, d_out}, rng, value_std, true);
    layers_.push_back(std::move(lp));
    used_.emplace_back(static_cast<std::size_t>(n), 0);
}

std::int64_t PoolSet::used_count(std::size_t layer) const {
    std::int64_t c = 0;
    for (std::uint8_t b : used_[layer]) c += b ? 1 : 0;
    return c;
}

std::int64_t PoolSet::used_count_total() const {
    std::int64_t c = 0;
    for (std::size_t i = 0; i < used_.size(); ++i) c += used_count(i);
    return c;
}

std::vector<double> PoolSet::project_embedding(std::size_t layer,
                                               const std::vector<double>& e) const {
    const std::int64_t d_in = layers_[layer].keys.dim(1);
    const std::int64_t d_lang = static_cast<std::int64_t>(e.size());
    if (d_lang == d_in) return e;
    Rng rng = make_rng(mix_seed(seed_, "lang-proj-" + layers_[layer].name));
    std::vector<double> out(static_cast<std::size_t>(d_in), 0.0);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_lang));
    for (std::int64_t r = 0; r < d_in; ++r) {
        double acc = 0.0;
        for (std::int64_t c = 0; c < d_lang; ++c) {
            acc += scale * normal(rng) * e[static_cast<std::size_t>(c)];
        }
        out[static_cast<std::size_t>(r)] = acc;
    }
    double norm = 0.0;
    for (double x : out) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 1e-300) {
        for (double& x : out) x /= norm;
    }
    return out;
}

TaskMask PoolSet::build_mask_language(int task_id, const std::vector<double>& e,
                                      const PoolBudget& budget, bool first_task) const {
    TaskMask mask;
    mask.task_id = task_id;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
        const std::vector<double> el = project_embedding(li, e);
        const std::vector<double> sims = cosine_similarities(el, layers_[li].keys);
        const std::vector<std::int64_t> sel = top_j_by_similarity(sims, budget.j);
        TaskLayerMask lm;
        if (first_task) {
            lm.rows = sel;
            lm.specific = sel;
        } else {
            lm = split_shared_specific(sel, used_[li], budget.mu, budget.j, sims,
                                       budget.refill);
        }
        mask.layers.push_back(std::move(lm));
    }
    return mask;
}

TaskMask PoolSet::build_mask_by_id(int task_id, std::uint64_t seed, const PoolBudget& budget,
                                   bool first_task) const {
    TaskMask mask;
    mask.task_id = task_id;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
        const std::uint64_t layer_seed = mix_seed(seed, "layer", static_cast<std::uint64_t>(li));
        const std::vector<std::int64_t> sel =
            mask_by_task_id(task_id, budget.j, capacity_, layer_seed);
        TaskLayerMask lm;
        if (first_task) {
            lm.rows = sel;
            lm.specific = sel;
        } else {
            const std::uint64_t prio_seed =
                mix_seed(layer_seed, "prio", static_cast<std::uint64_t>(task_id));
            std::vector<double> prio(static_cast<std::size_t>(capacity_));
            for (std::int64_t r = 0; r < capacity_; ++r) {
                prio[static_cast<std::size_t>(r)] = row_priority(prio_seed, r);
            }
            lm = split_shared_specific(sel, used_[li], budget.mu, budget.j, prio,
                                       budget.refill);
        }
        mask.layers.push_back(std::move(lm));
    }
    return mask;
}

void PoolSet::register_task(const TaskMask& mask, const PoolBudget& budget, bool first_task) {
    if (registry_.count(mask.task_id)) {
        throw ContractError("register_task: duplicate task id " + std::to_string(mask.task_id));
    }
    if (mask.layers.size() != layers_.size()) {
        throw ContractError("register_task: layer count mismatch");
    }
    const std::int64_t cap = share_cap(budget.mu, budget.j);
    for (std::size_t li = 0; li < mask.layers.size(); ++li) {
        const TaskLayerMask& lm = mask.layers[li];
        std::set<std::int64_t> sh(lm.shared.begin(), lm.shared.end());
        std::set<std::int64_t> sp(lm.specific.begin(), lm.specific.end());
        if (sh.size() + sp.size() != lm.rows.size()) {
            throw ContractError("register_task: shared/specific do not partition the mask");
        }
        for (std::int64_t r : lm.rows) {
            if (r < 0 || r >= capacity_) throw ContractError("register_task: row out of range");
            if (!sh.count(r) && !sp.count(r)) {
                throw ContractError("register_task: mask row missing from both subsets");
            }
        }
        if (budget.refill &&
            static_cast<std::int64_t>(lm.rows.size()) != budget.j) {
            throw ContractError("register_task: mask popcount differs from the row budget");
        }
        if (first_task && !lm.shared.empty()) {
            throw ContractError("register_task: first task cannot share rows");
        }
        if (!first_task && static_cast<std::int64_t>(lm.shared.size()) > cap) {
            throw ContractError("register_task: shared set exceeds the cap");
        }
        for (std::int64_t r : lm.specific) {
            if (used_[li][static_cast<std::size_t>(r)]) {
                throw ContractError("register_task: specific row already in use");
            }
        }
        for (std::int64_t r : lm.shared) {
            if (!used_[li][static_cast<std::size_t>(r)]) {
                throw ContractError("register_task: shared row was never used");
            }
        }
    }
    for (std::size_t li = 0; li < mask.layers.size(); ++li) {
        for (std::int64_t r : mask.layers[li].rows) used_[li][static_cast<std::size_t>(r)] = 1;
    }
    registry_.emplace(mask.task_id, mask);
}

void PoolSet::store_mask_unchecked(const TaskMask& mask) {
    if (registry_.count(mask.task_id)) {
        throw ContractError("store_mask_unchecked: duplicate task id " +
                            std::to_string(mask.task_id));
    }
    if (mask.layers.size() != layers_.size()) {
        throw ContractError("store_mask_unchecked: layer count mismatch");
    }
    for (std::size_t li = 0; li < mask.layers.size(); ++li) {
        for (std::int64_t r : mask.layers[li].rows) {
            if (r < 0 || r >= capacity_) {
                throw ContractError("store_mask_unchecked: row out of range");
            }
            used_[li][static_cast<std::size_t>(r)] = 1;
        }
    }
    registry_.emplace(mask.task_id, mask);
}

const TaskMask& PoolSet::task_mask(int task_id) const {
    auto it = registry_.find(task_id);
    if (it == registry_.end()) {
        throw ContractError("task_mask: unregistered task id " + std::to_string(task_id));
    }
    return it->second;
}

void PoolSet::extend(std::int64_t extra_rows) {
    if (extra_rows < 1) throw ContractError("extend: extra_rows must be >= 1");
    ++growths_;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
        LayerPool& lp = layers_[li];
        Rng rng = make_rng(mix_seed(seed_, "extend-" + lp.name,
                                    static_cast<std::uint64_t>(growths_)));
        const std::int64_t dk = lp.keys.dim(1), dv = lp.values.dim(1);
        std::vector<double> krows(static_cast<std::size_t>(extra_rows * dk));
        for (double& x : krows) x = lp.key_std * normal(rng);
        std::vector<double> vrows(static_cast<std::size_t>(extra_rows * dv));
        for (double& x : vrows) x = lp.value_std * normal(rng);
        lp.keys.append_rows(krows);
        lp.values.append_rows(vrows);
        used_[li].resize(used_[li].size() + static_cast<std::size_t>(extra_rows), 0);
    }
    capacity_ += extra_rows;
}

void PoolSet::restore_layer_data(std::size_t layer, const std::vector<double>& keys,
                                 const std::vector<double>& values, std::int64_t rows) {
    if (layer >= layers_.size()) throw LoadError("restore_layer_data: layer index out of range");
    LayerPool& lp = layers_[layer];
    const std::int64_t dk = lp.keys.dim(1), dv = lp.values.dim(1);
    if (rows < capacity_) {
        throw LoadError("restore_layer_data: " + lp.name + " has fewer rows than the live pool");
    }
    if (static_cast<std::int64_t>(keys.size()) != rows * dk) {
        throw LoadError("restore_layer_data: " + lp.name + " key payload length mismatch");
    }
    if (static_cast<std::int64_t>(values.size()) != rows * dv) {
        throw LoadError("restore_layer_data: " + lp.name + " value payload length mismatch");
    }
    if (rows > capacity_) {
        const std::int64_t extra = rows - capacity_;
        lp.keys.append_rows(std::vector<double>(static_cast<std::size_t>(extra * dk), 0.0));
        lp.values.append_rows(std::vector<double>(static_cast<std::size_t>(extra * dv), 0.0));
        used_[layer].resize(static_cast<std::size_t>(rows), 0);
        // capacity_ is pool-wide; bump it once every layer has caught up.
        bool all_grown = true;
        for (const LayerPool& other : layers_) {
            if (other.keys.dim(0) != rows) all_grown = false;
        }
        if (all_grown) capacity_ = rows;
    }
    std::copy(keys.begin(), keys.end(), lp.keys.data());
    std::copy(values.begin(), values.end(), lp.values.data());
}

void PoolSet::restore_growth(std::int64_t growth_count) {
    if (growth_count < 0) throw LoadError("restore_growth: negative growth count");
    growths_ = growth_count;
}

void PoolSet::restore_registry(std::map<int, TaskMask> registry,
                               std::vector<std::vector<std::uint8_t>> used) {
    if (used.size() != layers_.size()) {
        throw LoadError("restore_registry: usage mask layer count mismatch");
    }
    for (const auto& u : used) {
        if (static_cast<std::int64_t>(u.size()) != capacity_) {
            throw LoadError("restore_registry: usage mask length mismatch");
        }
    }
    registry_ = std::move(registry);
    used_ = std::move(used);
}

}  // namespace t2s
