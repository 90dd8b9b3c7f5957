#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace t2s {

// Lower-triangular success matrix. entry (i, j), 0-based with j <= i, is the
// success rate on the j-th trained task measured right after training the
// i-th. Cells start absent; reading an unset cell throws.
class SuccessMatrix {
  public:
    explicit SuccessMatrix(int m);

    int size() const { return M_; }
    void set(int i, int j, double value);
    double at(int i, int j) const;
    bool has(int i, int j) const;

  private:
    std::size_t index(int i, int j) const;

    int M_ = 0;
    std::vector<double> cells_;
    std::vector<char> present_;
};

enum class NbtConvention {
    ExcludeFinal,  // mean of NBT_m over m in [0, M-2]
    ZeroFinal,     // NBT_{M-1} := 0, mean over all M
};

struct MetricTriple {
    double fwt = 0.0;
    double nbt = 0.0;
    double auc = 0.0;
    std::vector<double> nbt_m;  // length M-1, one per non-final task
    std::vector<double> auc_m;  // length M
};

// Mean of the diagonal.
double fwt(const SuccessMatrix& m);

// Per-task forgetting: NBT_m = mean over later rows q of (r_mm - r_qm),
// then averaged across tasks per the convention. Negative means the task
// improved after its own training round.
double nbt(const SuccessMatrix& m, NbtConvention convention = NbtConvention::ExcludeFinal);

// Per-task area under the column from the diagonal down, averaged over tasks.
double auc(const SuccessMatrix& m);

MetricTriple compute_metrics(const SuccessMatrix& m,
                             NbtConvention convention = NbtConvention::ExcludeFinal);

// Short config token: "exclude-final" | "zero-final".
const char* nbt_convention_token(NbtConvention convention);
NbtConvention nbt_convention_from_string(const std::string& s);

// Longer sentence for table headers.
const char* nbt_convention_label(NbtConvention convention);

}  // namespace t2s
