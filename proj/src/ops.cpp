#include "t2s/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "t2s/errors.hpp"

namespace t2s::ops {

namespace {

using i64 = std::int64_t;

// C[M,N] += A[M,K] . B[K,N]
void mm_nn(double* C, const double* A, const double* B, i64 M, i64 K, i64 N) {
    for (i64 i = 0; i < M; ++i) {
        double* c = C + i * N;
        const double* a = A + i * K;
        for (i64 k = 0; k < K; ++k) {
            const double av = a[k];
            const double* b = B + k * N;
            for (i64 j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

// C[M,N] += A[M,K] . B[N,K]^T
void mm_nt(double* C, const double* A, const double* B, i64 M, i64 K, i64 N) {
    for (i64 i = 0; i < M; ++i) {
        const double* a = A + i * K;
        double* c = C + i * N;
        for (i64 j = 0; j < N; ++j) {
            const double* b = B + j * K;
            double acc = 0.0;
            for (i64 k = 0; k < K; ++k) acc += a[k] * b[k];
            c[j] += acc;
        }
    }
}

// C[M,N] += A[K,M]^T . B[K,N]
void mm_tn(double* C, const double* A, const double* B, i64 K, i64 M, i64 N) {
    for (i64 k = 0; k < K; ++k) {
        const double* a = A + k * M;
        const double* b = B + k * N;
        for (i64 i = 0; i < M; ++i) {
            const double av = a[i];
            if (av == 0.0) continue;
            double* c = C + i * N;
            for (i64 j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

bool tracked(const Tensor& t) { return grad_enabled() && t.requires_grad(); }

Tensor make_out(std::vector<i64> shape, bool track) {
    return Tensor::zeros(std::move(shape), track);
}

void attach(Tensor& out, std::vector<Tensor> parents,
            std::function<void(const Tensor&)> fn) {
    if (!out.requires_grad()) return;
    auto node = std::make_shared<GradNode>();
    node->parents = std::move(parents);
    node->backward = std::move(fn);
    node->id = next_node_id();
    out.node = node;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch");
    }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    const bool track = tracked(a) || tracked(b);
    Tensor out = make_out(a.shape(), track);
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    const i64 n = a.numel();
    for (i64 i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
    attach(out, {a, b}, [](const Tensor& o) {
        const Tensor& a2 = o.node->parents[0];
        const Tensor& b2 = o.node->parents[1];
        const double* g = o.grad();
        const i64 m = o.numel();
        if (a2.requires_grad()) {
            double* ga = o.node->parents[0].grad_ptr->data();
            for (i64 i = 0; i < m; ++i) ga[i] += g[i];
        }
        if (b2.requires_grad()) {
            double* gb = o.node->parents[1].grad_ptr->data();
            for (i64 i = 0; i < m; ++i) gb[i] += g[i];
        }
    });
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    const bool track = tracked(a) || tracked(b);
    Tensor out = make_out(a.shape(), track);
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    const i64 n = a.numel();
    for (i64 i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
    attach(out, {a, b}, [](const Tensor& o) {
        const Tensor& a2 = o.node->parents[0];
        const Tensor& b2 = o.node->parents[1];
        const double* g = o.grad();
        const i64 m = o.numel();
        if (a2.requires_grad()) {
            double* ga = o.node->parents[0].grad_ptr->data();
            for (i64 i = 0; i < m; ++i) ga[i] += g[i];
        }
        if (b2.requires_grad()) {
            double* gb = o.node->parents[1].grad_ptr->data();
            for (i64 i = 0; i < m; ++i) gb[i] -= g[i];
        }
    });
    return out;
}

Tensor scale(const Tensor& a, double c) {
    Tensor out = make_out(a.shape(), tracked(a));
    const double* pa = a.data();
    double* po = out.data();
    const i64 n = a.numel();
    for (i64 i = 0; i < n; ++i) po[i] = c * pa[i];
    attach(out, {a}, [c](const Tensor& o) {
        if (!o.node->parents[0].requires_grad()) return;
        double* ga = o.node->parents[0].grad_ptr->data();
        const double* g = o.grad();
        const i64 m = o.numel();
        for (i64 i = 0; i < m; ++i) ga[i] += c * g[i];
    });
    return out;
}

namespace {

struct MatmulDims {
    i64 batches;  // 1 for 2-D left operand
    i64 m, k;
    bool batched_left;
    bool batched_right;
};

MatmulDims matmul_dims(const Tensor& a, const Tensor& b, const char* op) {
    MatmulDims d{};
    if (a.rank() == 2) {
        d.batches = 1;
        d.m = a.dim(0);
        d.k = a.dim(1);
        d.batched_left = false;
    } else if (a.rank() == 3) {
        d.batches = a.dim(0);
        d.m = a.dim(1);
        d.k = a.dim(2);
        d.batched_left = true;
    } else {
        throw ShapeError(std::string(op) + ": left operand must be 2-D or 3-D");
    }
    if (b.rank() == 2) {
        d.batched_right = false;
    } else if (b.rank() == 3) {
        if (!d.batched_left || b.dim(0) != d.batches) {
            throw ShapeError(std::string(op) + ": batch dimensions disagree");
        }
        d.batched_right = true;
    } else {
        throw ShapeError(std::string(op) + ": right operand must be 2-D or 3-D");
    }
    return d;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    const MatmulDims d = matmul_dims(a, b, "matmul");
    const i64 bk = d.batched_right ? b.dim(1) : b.dim(0);
    const i64 n = d.batched_right ? b.dim(2) : b.dim(1);
    if (bk != d.k) throw ShapeError("matmul: inner dimensions disagree");

    std::vector<i64> oshape = d.batched_left ? std::vector<i64>{d.batches, d.m, n}
                                             : std::vector<i64>{d.m, n};
    Tensor out = make_out(std::move(oshape), tracked(a) || tracked(b));
    const i64 m = d.m, k = d.k;
    for (i64 bi = 0; bi < d.batches; ++bi) {
        mm_nn(out.data() + bi * m * n, a.data() + bi * m * k,
              b.data() + (d.batched_right ? bi * k * n : 0), m, k, n);
    }
    const MatmulDims dc = d;
    attach(out, {a, b}, [dc, k, n](const Tensor& o) {
        const Tensor& a2 = o.node->parents[0];
        const Tensor& b2 = o.node->parents[1];
        const i64 m = dc.m;
        for (i64 bi = 0; bi < dc.batches; ++bi) {
            const double* g = o.grad() + bi * m * n;
            const double* pa = a2.data() + bi * m * k;
            const double* pb = b2.data() + (dc.batched_right ? bi * k * n : 0);
            if (a2.requires_grad()) {
                // ga += g . b^T
                mm_nt(a2.grad_ptr->data() + bi * m * k, g, pb, m, n, k);
            }
            if (b2.requires_grad()) {
                // gb += a^T . g  (accumulates over the batch for a shared b)
                mm_tn(b2.grad_ptr->data() + (dc.batched_right ? bi * k * n : 0), pa, g, m, k, n);
            }
        }
    });
    return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    const MatmulDims d = matmul_dims(a, b, "matmul_nt");
    const i64 n = d.batched_right ? b.dim(1) : b.dim(0);
    const i64 bk = d.batched_right ? b.dim(2) : b.dim(1);
    if (bk != d.k) throw ShapeError("matmul_nt: inner dimensions disagree");

    std::vector<i64> oshape = d.batched_left ? std::vector<i64>{d.batches, d.m, n}
                                             : std::vector<i64>{d.m, n};
    Tensor out = make_out(std::move(oshape), tracked(a) || tracked(b));
    const i64 m = d.m, k = d.k;
    for (i64 bi = 0; bi < d.batches; ++bi) {
        mm_nt(out.data() + bi * m * n, a.data() + bi * m * k,
              b.data() + (d.batched_right ? bi * n * k : 0), m, k, n);
    }
    const MatmulDims dc = d;
    attach(out, {a, b}, [dc, k, n](const Tensor& o) {
        const Tensor& a2 = o.node->parents[0];
        const Tensor& b2 = o.node->parents[1];
        const i64 m = dc.m;
        for (i64 bi = 0; bi < dc.batches; ++bi) {
            const double* g = o.grad() + bi * m * n;
            const double* pa = a2.data() + bi * m * k;
            const double* pb = b2.data() + (dc.batched_right ? bi * n * k : 0);
            if (a2.requires_grad()) {
                // ga += g . b
                mm_nn(a2.grad_ptr->data() + bi * m * k, g, pb, m, n, k);
            }
            if (b2.requires_grad()) {
                // gb += g^T . a
                mm_tn(b2.grad_ptr->data() + (dc.batched_right ? bi * n * k : 0), g, pa, m, n, k);
            }
        }
    });
    return out;
}

Tensor softmax_rows(const Tensor& x) {
    if (x.rank() < 1) throw ShapeError("softmax_rows: rank must be >= 1");
    const i64 cols = x.dim(x.rank() - 1);
    if (cols < 1) throw ShapeError("softmax_rows: empty last dimension");
    const i64 rows = x.numel() / cols;
    Tensor out = make_out(x.shape(), tracked(x));
    const double* px = x.data();
    double* po = out.data();
    for (i64 r = 0; r < rows; ++r) {
        const double* xr = px + r * cols;
        double* yr = po + r * cols;
        double mx = xr[0];
        for (i64 j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
        double s = 0.0;
        for (i64 j = 0; j < cols; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            s += yr[j];
        }
        const double inv = 1.0 / s;
        for (i64 j = 0; j < cols; ++j) yr[j] *= inv;
    }
    attach(out, {x}, [rows, cols](const Tensor& o) {
        if (!o.node->parents[0].requires_grad()) return;
        double* gx = o.node->parents[0].grad_ptr->data();
        const double* g = o.grad();
        const double* y = o.data();
        for (i64 r = 0; r < rows; ++r) {
            const double* gr = g + r * cols;
            const double* yr = y + r * cols;
            double dot = 0.0;
            for (i64 j = 0; j < cols; ++j) dot += gr[j] * yr[j];
            double* gxr = gx + r * cols;
            for (i64 j = 0; j < cols; ++j) gxr[j] += yr[j] * (gr[j] - dot);
        }
    });
    return out;
}

Tensor rms_normalize(const Tensor& x, double eps) {
    if (x.rank() < 1) throw ShapeError("rms_normalize: rank must be >= 1");
    const i64 cols = x.dim(x.rank() - 1);
    if (cols < 1) throw ShapeError("rms_normalize: empty last dimension");
    const i64 rows = x.numel() / cols;
    Tensor out = make_out(x.shape(), tracked(x));
    const double* px = x.data();
    double* po = out.data();
    for (i64 r = 0; r < rows; ++r) {
        const double* xr = px + r * cols;
        double* yr = po + r * cols;
        double ms = 0.0;
        for (i64 j = 0; j < cols; ++j) ms += xr[j] * xr[j];
        ms /= static_cast<double>(cols);
        const double inv = 1.0 / std::sqrt(ms + eps);
        for (i64 j = 0; j < cols; ++j) yr[j] = xr[j] * inv;
    }
    attach(out, {x}, [rows, cols, eps](const Tensor& o) {
        if (!o.node->parents[0].requires_grad()) return;
        const Tensor& x2 = o.node->parents[0];
        double* gx = x2.grad_ptr->data();
        const double* g = o.grad();
        const double* px2 = x2.data();
        for (i64 r = 0; r < rows; ++r) {
            const double* xr = px2 + r * cols;
            const double* gr = g + r * cols;
            double ms = 0.0, dot = 0.0;
            for (i64 j = 0; j < cols; ++j) {
                ms += xr[j] * xr[j];
                dot += gr[j] * xr[j];
            }
            ms /= static_cast<double>(cols);
            const double r1 = 1.0 / std::sqrt(ms + eps);
            const double r3 = r1 * r1 * r1 / static_cast<double>(cols);
            double* gxr = gx + r * cols;
            for (i64 j = 0; j < cols; ++j) gxr[j] += gr[j] * r1 - xr[j] * dot * r3;
        }
    });
    return out;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    if (a.rank() != b.rank() || a.rank() < 1) {
        throw ShapeError("concat_cols: rank mismatch");
    }
    for (int i = 0; i + 1 < a.rank(); ++i) {
        if (a.dim(i) != b.dim(i)) throw ShapeError("concat_cols: leading dims disagree");
    }
    const i64 pa = a.dim(a.rank() - 1);
    const i64 pb = b.dim(b.rank() - 1);
    const i64 rows = a.numel() / pa;
    std::vector<i64> oshape = a.shape();
    oshape.back() = pa + pb;
    Tensor out = make_out(std::move(oshape), tracked(a) || tracked(b));
    double* po = out.data();
    const double* xa = a.data();
    const double* xb = b.data();
    for (i64 r = 0; r < rows; ++r) {
        std::copy(xa + r * pa, xa + (r + 1) * pa, po + r * (pa + pb));
        std::copy(xb + r * pb, xb + (r + 1) * pb, po + r * (pa + pb) + pa);
    }
    attach(out, {a, b}, [rows, pa, pb](const Tensor& o) {
        const Tensor& a2 = o.node->parents[0];
        const Tensor& b2 = o.node->parents[1];
        const double* g = o.grad();
        const i64 w = pa + pb;
        if (a2.requires_grad()) {
            double* ga = a2.grad_ptr->data();
            for (i64 r = 0; r < rows; ++r)
                for (i64 j = 0; j < pa; ++j) ga[r * pa + j] += g[r * w + j];
        }
        if (b2.requires_grad()) {
            double* gb = b2.grad_ptr->data();
            for (i64 r = 0; r < rows; ++r)
                for (i64 j = 0; j < pb; ++j) gb[r * pb + j] += g[r * w + pa + j];
        }
    });
    return out;
}

Tensor slice_cols(const Tensor& x, std::int64_t start, std::int64_t len) {
    if (x.rank() < 1) throw ShapeError("slice_cols: rank must be >= 1");
    const i64 cols = x.dim(x.rank() - 1);
    if (start < 0 || len < 1 || start + len > cols) {
        throw ContractError("slice_cols: slice out of range");
    }
    const i64 rows = x.numel() / cols;
    std::vector<i64> oshape = x.shape();
    oshape.back() = len;
    Tensor out = make_out(std::move(oshape), tracked(x));
    double* po = out.data();
    const double* px = x.data();
    for (i64 r = 0; r < rows; ++r) {
        std::copy(px + r * cols + start, px + r * cols + start + len, po + r * len);
    }
    attach(out, {x}, [rows, cols, start, len](const Tensor& o) {
        if (!o.node->parents[0].requires_grad()) return;
        double* gx = o.node->parents[0].grad_ptr->data();
        const double* g = o.grad();
        for (i64 r = 0; r < rows; ++r)
            for (i64 j = 0; j < len; ++j) gx[r * cols + start + j] += g[r * len + j];
    });
    return out;
}

Tensor gather_rows(const Tensor& x, const std::vector<std::int64_t>& rows) {
    if (x.rank() != 2) throw ShapeError("gather_rows: source must be 2-D");
    const i64 n = x.dim(0), d = x.dim(1);
    for (i64 r : rows) {
        if (r < 0 || r >= n) throw ContractError("gather_rows: row index out of range");
    }
    const i64 k = static_cast<i64>(rows.size());
    Tensor out = make_out({k, d}, tracked(x));
    double* po = out.data();
    const double* px = x.data();
    for (i64 i = 0; i < k; ++i) {
        std::copy(px + rows[static_cast<std::size_t>(i)] * d,
                  px + (rows[static_cast<std::size_t>(i)] + 1) * d, po + i * d);
    }
    attach(out, {x}, [rows, d](const Tensor& o) {
        if (!o.node->parents[0].requires_grad()) return;
        double* gx = o.node->parents[0].grad_ptr->data();
        const double* g = o.grad();
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const double* gi = g + static_cast<i64>(i) * d;
            double* gr = gx + rows[i] * d;
            for (i64 j = 0; j < d; ++j) gr[j] += gi[j];
        }
    });
    return out;
}

Tensor take_token(const Tensor& x, std::int64_t t) {
    if (x.rank() != 3) throw ShapeError("take_token: input must be [B,T,d]");
    const i64 B = x.dim(0), T = x.dim(1), d = x.dim(2);
    if (t < 0 || t >= T) throw ContractError("take_token: token index out of range");
    Tensor out = make_out({B, d}, tracked(x));
    double* po = out.data();
    const double* px = x.data();
    for (i64 b = 0; b < B; ++b) {
        std::copy(px + (b * T + t) * d, px + (b * T + t + 1) * d, po + b * d);
    }
    attach(out, {x}, [B, T, d, t](const Tensor& o) {
        if (!o.node->parents[0].requires_grad()) return;
        double* gx = o.node->parents[0].grad_ptr->data();
        const double* g = o.grad();
        for (i64 b = 0; b < B; ++b) {
            double* gr = gx + (b * T + t) * d;
            const double* gi = g + b * d;
            for (i64 j = 0; j < d; ++j) gr[j] += gi[j];
        }
    });
    return out;
}

Tensor sum(const Tensor& x) {
    Tensor out = make_out({1}, tracked(x));
    double acc = 0.0;
    const double* px = x.data();
    const i64 n = x.numel();
    for (i64 i = 0; i < n; ++i) acc += px[i];
    out.data()[0] = acc;
    attach(out, {x}, [n](const Tensor& o) {
        if (!o.node->parents[0].requires_grad()) return;
        double* gx = o.node->parents[0].grad_ptr->data();
        const double g = o.grad()[0];
        for (i64 i = 0; i < n; ++i) gx[i] += g;
    });
    return out;
}

Tensor mse(const Tensor& pred, const Tensor& target) {
    check_same_shape(pred, target, "mse");
    const i64 n = pred.numel();
    if (n == 0) throw ShapeError("mse: empty tensors");
    Tensor out = make_out({1}, tracked(pred) || tracked(target));
    const double* pp = pred.data();
    const double* pt = target.data();
    double acc = 0.0;
    for (i64 i = 0; i < n; ++i) {
        const double e = pp[i] - pt[i];
        acc += e * e;
    }
    out.data()[0] = acc / static_cast<double>(n);
    attach(out, {pred, target}, [n](const Tensor& o) {
        const Tensor& p2 = o.node->parents[0];
        const Tensor& t2 = o.node->parents[1];
        const double g = o.grad()[0] * 2.0 / static_cast<double>(n);
        const double* pp = p2.data();
        const double* pt = t2.data();
        if (p2.requires_grad()) {
            double* gp = p2.grad_ptr->data();
            for (i64 i = 0; i < n; ++i) gp[i] += g * (pp[i] - pt[i]);
        }
        if (t2.requires_grad()) {
            double* gt = t2.grad_ptr->data();
            for (i64 i = 0; i < n; ++i) gt[i] -= g * (pp[i] - pt[i]);
        }
    });
    return out;
}

Tensor detach(const Tensor& x) { return x.detach(); }

void backward(const Tensor& loss) {
    if (loss.numel() != 1) throw ContractError("backward: loss must be scalar");
    if (!loss.requires_grad()) {
        throw ContractError("backward: loss is not connected to the tape");
    }
    loss.grad_ptr->at(0) += 1.0;
    if (!loss.node) return;  // tracked leaf used directly as loss

    // Node ids increase with creation order, so descending id is a valid
    // reverse-topological order over the reachable subgraph.
    struct Item {
        Tensor out;
    };
    std::vector<Item> ordered;
    std::vector<Tensor> dfs{loss};
    std::unordered_set<const GradNode*> visited;
    while (!dfs.empty()) {
        Tensor t = dfs.back();
        dfs.pop_back();
        if (!t.node || visited.count(t.node.get())) continue;
        visited.insert(t.node.get());
        ordered.push_back({t});
        for (const Tensor& p : t.node->parents) {
            if (p.node && !visited.count(p.node.get())) dfs.push_back(p);
        }
    }
    std::sort(ordered.begin(), ordered.end(),
              [](const Item& a, const Item& b) { return a.out.node->id > b.out.node->id; });
    for (const Item& it : ordered) {
        it.out.node->backward(it.out);
    }
}

void zero_grad(Tensor& t) {
    if (t.grad_ptr) std::fill(t.grad_ptr->begin(), t.grad_ptr->end(), 0.0);
}

}  // namespace t2s::ops
