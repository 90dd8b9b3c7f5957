#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "t2s/tensor.hpp"

namespace t2s {

enum class OptKind { SgdMomentum, Adam };

OptKind opt_kind_from_string(const std::string& s);
const char* opt_kind_name(OptKind kind);

struct OptimizerConfig {
    OptKind kind = OptKind::Adam;
    double lr = 1e-3;
    double momentum = 0.9;  // sgd-momentum only
    double beta1 = 0.9;     // adam only
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Holds one moment-buffer slot per registered parameter. A parameter may be
// registered with an explicit set of trainable rows (2-D only); every other
// row is frozen: its values and its moment entries are never touched, so a
// frozen row stays bit-identical across any number of steps.
class Optimizer {
public:
    explicit Optimizer(OptimizerConfig cfg);

    void add_param(const Tensor& p);  // all rows trainable
    void add_param(const Tensor& p, std::vector<std::int64_t> trainable_rows);

    void step();
    void zero_grad();

    std::int64_t step_count() const { return t_; }
    const OptimizerConfig& config() const { return cfg_; }

private:
    struct Slot {
        Tensor param;
        bool all_rows = true;
        std::vector<std::int64_t> rows;  // sorted, unique
        std::vector<double> m;           // momentum / first moment
        std::vector<double> v;           // second moment (adam)
    };

    void update_span(Slot& slot, std::int64_t begin, std::int64_t len);

    OptimizerConfig cfg_;
    std::vector<Slot> slots_;
    std::int64_t t_ = 0;
};

}  // namespace t2s
