#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "t2s/rng.hpp"

namespace t2s {

class Tensor;

// One recorded primitive on the gradient tape. Nodes hold copies of the
// parent tensors (sharing their storage) plus a closure that scatters the
// output gradient back into them.
struct GradNode {
    std::vector<Tensor> parents;
    std::function<void(const Tensor& out)> backward;
    std::uint64_t id = 0;  // creation order; fixes the topological walk
};

// Dense row-major tensor of 64-bit floats, rank 1..3. Copies share storage;
// values are treated as immutable once created inside a tape. The only
// sanctioned mutation is an optimizer step (or pool growth) on leaves.
class Tensor {
public:
    std::shared_ptr<std::vector<double>> data_ptr;
    std::shared_ptr<std::vector<double>> grad_ptr;  // allocated iff requires_grad
    std::shared_ptr<GradNode> node;

    Tensor() = default;

    static Tensor zeros(std::vector<std::int64_t> shape, bool requires_grad = false);
    static Tensor full(std::vector<std::int64_t> shape, double value, bool requires_grad = false);
    static Tensor from_data(std::vector<double> data, std::vector<std::int64_t> shape,
                            bool requires_grad = false);
    static Tensor randn(std::vector<std::int64_t> shape, Rng& rng, double stddev,
                        bool requires_grad = false);

    const std::vector<std::int64_t>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    std::int64_t dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::int64_t numel() const;
    bool defined() const { return data_ptr != nullptr; }
    bool requires_grad() const { return requires_grad_; }

    double* data() { return data_ptr->data(); }
    const double* data() const { return data_ptr->data(); }
    std::vector<double>& vec() { return *data_ptr; }
    const std::vector<double>& vec() const { return *data_ptr; }

    bool has_grad() const { return grad_ptr != nullptr; }
    double* grad() { return grad_ptr->data(); }
    const double* grad() const { return grad_ptr->data(); }
    const std::vector<double>& grad_vec() const { return *grad_ptr; }

    double item() const;                                   // scalar only
    double at(std::int64_t i) const;                       // rank 1
    double at(std::int64_t i, std::int64_t j) const;       // rank 2
    double at(std::int64_t b, std::int64_t i, std::int64_t j) const;  // rank 3

    // Value-identical view that the tape cannot see through.
    Tensor detach() const;
    // Deep copy of the values (fresh storage, no tape).
    Tensor clone() const;

    bool all_finite() const;

    // Grow a 2-D leaf in place by appending rows. Grad buffer grows with it.
    void append_rows(const std::vector<double>& row_data);

    // Used by ops: allocate grad storage (zeros) when tracking.
    void init_grad_storage();
    void set_requires_grad_flag(bool v) { requires_grad_ = v; }
    void set_shape(std::vector<std::int64_t> s) { shape_ = std::move(s); }

private:
    std::vector<std::int64_t> shape_;
    bool requires_grad_ = false;
};

// While alive, ops build no tape and their outputs do not require grad.
// Evaluation rollouts run under this guard.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

bool grad_enabled();
std::uint64_t next_node_id();

}  // namespace t2s
