#include "t2s/optim.hpp"

#include <algorithm>
#include <cmath>

#include "t2s/errors.hpp"

namespace t2s {

OptKind opt_kind_from_string(const std::string& s) {
    if (s == "sgd-momentum") return OptKind::SgdMomentum;
    if (s == "adam") return OptKind::Adam;
    throw ConfigError("unknown optimizer kind: " + s);
}

const char* opt_kind_name(OptKind kind) {
    switch (kind) {
        case OptKind::SgdMomentum: return "sgd-momentum";
        case OptKind::Adam: return "adam";
    }
    throw ConfigError("unknown optimizer kind enum value");
}

Optimizer::Optimizer(OptimizerConfig cfg) : cfg_(cfg) {
    if (cfg_.lr <= 0.0) throw ConfigError("optimizer lr must be positive");
}

void Optimizer::add_param(const Tensor& p) { add_param(p, {}); }

void Optimizer::add_param(const Tensor& p, std::vector<std::int64_t> trainable_rows) {
    if (!p.defined() || !p.requires_grad() || !p.has_grad()) {
        throw ContractError("optimizer: parameter has no gradient storage");
    }
    for (const Slot& s : slots_) {
        if (s.param.data_ptr.get() == p.data_ptr.get()) {
            throw ContractError("optimizer: parameter registered twice");
        }
    }
    Slot slot;
    slot.param = p;
    if (trainable_rows.empty()) {
        slot.all_rows = true;
    } else {
        if (p.rank() != 2) throw ContractError("optimizer: row masks need a 2-D parameter");
        std::sort(trainable_rows.begin(), trainable_rows.end());
        trainable_rows.erase(std::unique(trainable_rows.begin(), trainable_rows.end()),
                             trainable_rows.end());
        if (trainable_rows.front() < 0 || trainable_rows.back() >= p.dim(0)) {
            throw ContractError("optimizer: trainable row index out of range");
        }
        slot.all_rows = false;
        slot.rows = std::move(trainable_rows);
    }
    slot.m.assign(static_cast<std::size_t>(p.numel()), 0.0);
    if (cfg_.kind == OptKind::Adam) {
        slot.v.assign(static_cast<std::size_t>(p.numel()), 0.0);
    }
    slots_.push_back(std::move(slot));
}

void Optimizer::update_span(Slot& slot, std::int64_t begin, std::int64_t len) {
    double* p = slot.param.data() + begin;
    const double* g = slot.param.grad() + begin;
    double* m = slot.m.data() + begin;
    if (cfg_.kind == OptKind::SgdMomentum) {
        for (std::int64_t i = 0; i < len; ++i) {
            m[i] = cfg_.momentum * m[i] + g[i];
            p[i] -= cfg_.lr * m[i];
        }
    } else {
        double* v = slot.v.data() + begin;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::int64_t i = 0; i < len; ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mh = m[i] / c1;
            const double vh = v[i] / c2;
            p[i] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
        }
    }
}

void Optimizer::step() {
    ++t_;
    for (Slot& slot : slots_) {
        const std::int64_t n = slot.param.numel();
        if (static_cast<std::int64_t>(slot.param.grad_vec().size()) != n) {
            throw ContractError("optimizer: gradient buffer size drifted from parameter");
        }
        if (static_cast<std::int64_t>(slot.m.size()) < n) {
            // pool grew since registration; new rows start with zero moments
            slot.m.resize(static_cast<std::size_t>(n), 0.0);
            if (cfg_.kind == OptKind::Adam) slot.v.resize(static_cast<std::size_t>(n), 0.0);
        }
        if (slot.all_rows) {
            update_span(slot, 0, n);
        } else {
            const std::int64_t w = slot.param.dim(1);
            for (std::int64_t r : slot.rows) update_span(slot, r * w, w);
        }
    }
}

void Optimizer::zero_grad() {
    for (Slot& slot : slots_) {
        std::fill(slot.param.grad_ptr->begin(), slot.param.grad_ptr->end(), 0.0);
    }
}

}  // namespace t2s
