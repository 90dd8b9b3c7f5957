#include "t2s/tensor.hpp"

#include <cmath>
#include <numeric>
#include <utility>

#include "t2s/errors.hpp"

namespace t2s {

namespace {
thread_local bool g_grad_enabled = true;
thread_local std::uint64_t g_node_counter = 0;

std::int64_t shape_numel(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (std::int64_t d : shape) {
        if (d < 0) throw ShapeError("negative dimension in tensor shape");
        n *= d;
    }
    return n;
}
}  // namespace

bool grad_enabled() { return g_grad_enabled; }
std::uint64_t next_node_id() { return ++g_node_counter; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Tensor Tensor::zeros(std::vector<std::int64_t> shape, bool requires_grad) {
    Tensor t;
    const std::int64_t n = shape_numel(shape);
    t.shape_ = std::move(shape);
    t.data_ptr = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n), 0.0);
    t.requires_grad_ = requires_grad;
    if (requires_grad) t.init_grad_storage();
    return t;
}

Tensor Tensor::full(std::vector<std::int64_t> shape, double value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (double& x : *t.data_ptr) x = value;
    return t;
}

Tensor Tensor::from_data(std::vector<double> data, std::vector<std::int64_t> shape,
                         bool requires_grad) {
    const std::int64_t n = shape_numel(shape);
    if (static_cast<std::int64_t>(data.size()) != n) {
        throw ShapeError("from_data: data length does not match shape");
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ptr = std::make_shared<std::vector<double>>(std::move(data));
    t.requires_grad_ = requires_grad;
    if (requires_grad) t.init_grad_storage();
    return t;
}

Tensor Tensor::randn(std::vector<std::int64_t> shape, Rng& rng, double stddev,
                     bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (double& x : *t.data_ptr) x = stddev * normal(rng);
    return t;
}

std::int64_t Tensor::numel() const {
    return data_ptr ? static_cast<std::int64_t>(data_ptr->size()) : 0;
}

double Tensor::item() const {
    if (numel() != 1) throw ContractError("item(): tensor is not scalar");
    return (*data_ptr)[0];
}

double Tensor::at(std::int64_t i) const { return (*data_ptr)[static_cast<std::size_t>(i)]; }

double Tensor::at(std::int64_t i, std::int64_t j) const {
    return (*data_ptr)[static_cast<std::size_t>(i * shape_[1] + j)];
}

double Tensor::at(std::int64_t b, std::int64_t i, std::int64_t j) const {
    return (*data_ptr)[static_cast<std::size_t>((b * shape_[1] + i) * shape_[2] + j)];
}

Tensor Tensor::detach() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ptr = data_ptr;  // shares values
    t.requires_grad_ = false;
    return t;
}

Tensor Tensor::clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ptr = std::make_shared<std::vector<double>>(*data_ptr);
    return t;
}

bool Tensor::all_finite() const {
    for (double x : *data_ptr) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

void Tensor::append_rows(const std::vector<double>& row_data) {
    if (rank() != 2) throw ShapeError("append_rows: tensor must be 2-D");
    const std::int64_t cols = shape_[1];
    if (cols == 0 || static_cast<std::int64_t>(row_data.size()) % cols != 0) {
        throw ShapeError("append_rows: data length not a multiple of the row width");
    }
    data_ptr->insert(data_ptr->end(), row_data.begin(), row_data.end());
    if (grad_ptr) grad_ptr->resize(data_ptr->size(), 0.0);
    shape_[0] += static_cast<std::int64_t>(row_data.size()) / cols;
}

void Tensor::init_grad_storage() {
    grad_ptr = std::make_shared<std::vector<double>>(data_ptr->size(), 0.0);
}

}  // namespace t2s
