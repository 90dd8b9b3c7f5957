#include "t2s/metrics.hpp"

#include <cmath>
#include <string>

#include "t2s/errors.hpp"

namespace t2s {

SuccessMatrix::SuccessMatrix(int m) : M_(m) {
    if (m < 1) throw ContractError("success matrix needs at least one task, got " + std::to_string(m));
    const std::size_t n = static_cast<std::size_t>(m) * (static_cast<std::size_t>(m) + 1) / 2;
    cells_.assign(n, 0.0);
    present_.assign(n, 0);
}

std::size_t SuccessMatrix::index(int i, int j) const {
    if (i < 0 || i >= M_ || j < 0 || j > i) {
        throw ContractError("success matrix cell (" + std::to_string(i) + ", " + std::to_string(j) +
                            ") outside the lower triangle of M=" + std::to_string(M_));
    }
    return static_cast<std::size_t>(i) * (static_cast<std::size_t>(i) + 1) / 2 + static_cast<std::size_t>(j);
}

void SuccessMatrix::set(int i, int j, double value) {
    const std::size_t k = index(i, j);
    if (!(value >= 0.0 && value <= 1.0)) {
        throw ContractError("success rate " + std::to_string(value) + " at (" + std::to_string(i) +
                            ", " + std::to_string(j) + ") is outside [0, 1]");
    }
    cells_[k] = value;
    present_[k] = 1;
}

double SuccessMatrix::at(int i, int j) const {
    const std::size_t k = index(i, j);
    if (!present_[k]) {
        throw ContractError("success matrix cell (" + std::to_string(i) + ", " + std::to_string(j) +
                            ") was never measured");
    }
    return cells_[k];
}

bool SuccessMatrix::has(int i, int j) const { return present_[index(i, j)]; }

double fwt(const SuccessMatrix& m) {
    const int M = m.size();
    double acc = 0.0;
    for (int t = 0; t < M; ++t) acc += m.at(t, t);
    return acc / M;
}

namespace {

std::vector<double> per_task_nbt(const SuccessMatrix& m) {
    const int M = m.size();
    std::vector<double> out(static_cast<std::size_t>(M) - 1, 0.0);
    for (int t = 0; t + 1 < M; ++t) {
        const double own = m.at(t, t);
        double drop = 0.0;
        for (int q = t + 1; q < M; ++q) drop += own - m.at(q, t);
        out[static_cast<std::size_t>(t)] = drop / (M - t - 1);
    }
    return out;
}

std::vector<double> per_task_auc(const SuccessMatrix& m) {
    const int M = m.size();
    std::vector<double> out(static_cast<std::size_t>(M), 0.0);
    for (int t = 0; t < M; ++t) {
        double acc = 0.0;
        for (int q = t; q < M; ++q) acc += m.at(q, t);
        out[static_cast<std::size_t>(t)] = acc / (M - t);
    }
    return out;
}

double fold_nbt(const std::vector<double>& nbt_m, int M, NbtConvention convention) {
    double acc = 0.0;
    for (double v : nbt_m) acc += v;
    switch (convention) {
        case NbtConvention::ExcludeFinal: return acc / (M - 1);
        case NbtConvention::ZeroFinal: return acc / M;
    }
    throw ContractError("unknown nbt convention");
}

}  // namespace

double nbt(const SuccessMatrix& m, NbtConvention convention) {
    const int M = m.size();
    if (M < 2) {
        throw UndefinedMetricError("nbt needs at least two tasks; with M=1 no task has a later round");
    }
    return fold_nbt(per_task_nbt(m), M, convention);
}

double auc(const SuccessMatrix& m) {
    const int M = m.size();
    const std::vector<double> cols = per_task_auc(m);
    double acc = 0.0;
    for (double v : cols) acc += v;
    return acc / M;
}

MetricTriple compute_metrics(const SuccessMatrix& m, NbtConvention convention) {
    if (m.size() < 2) {
        throw UndefinedMetricError(
            "the metric triple includes nbt, which needs at least two tasks; "
            "call fwt/auc individually for a single-task matrix");
    }
    MetricTriple out;
    out.fwt = fwt(m);
    out.auc_m = per_task_auc(m);
    double acc = 0.0;
    for (double v : out.auc_m) acc += v;
    out.auc = acc / m.size();
    out.nbt_m = per_task_nbt(m);
    out.nbt = fold_nbt(out.nbt_m, m.size(), convention);
    return out;
}

const char* nbt_convention_token(NbtConvention convention) {
    switch (convention) {
        case NbtConvention::ExcludeFinal: return "exclude-final";
        case NbtConvention::ZeroFinal: return "zero-final";
    }
    throw ContractError("unknown nbt convention");
}

NbtConvention nbt_convention_from_string(const std::string& s) {
    if (s == "exclude-final") return NbtConvention::ExcludeFinal;
    if (s == "zero-final") return NbtConvention::ZeroFinal;
    throw ConfigError("unknown nbt convention: " + s + " (expected exclude-final or zero-final)");
}

const char* nbt_convention_label(NbtConvention convention) {
    switch (convention) {
        case NbtConvention::ExcludeFinal:
            return "nbt averaged over the first M-1 tasks (final task has no later round)";
        case NbtConvention::ZeroFinal:
            return "nbt averaged over all M tasks with the final task pinned to zero";
    }
    throw ContractError("unknown nbt convention");
}

}  // namespace t2s
