#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "t2s/metrics.hpp"
#include "t2s/tasksuite.hpp"
#include "t2s/trainer.hpp"

namespace t2s {

// Lower-case hex, zero-padded to 16 chars; the run directory name and the
// manifest reference embedded in every artifact.
std::string hex16(std::uint64_t h);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);  // LoadError when unreadable

// Tables are comma-separated with one `# manifest=<hex16>` comment line,
// a single header row, then data rows; floats use %.17g.
std::string render_success_matrix_csv(const SuccessMatrix& m, std::uint64_t manifest);
SuccessMatrix parse_success_matrix_csv(const std::string& text, std::uint64_t expected_manifest);

std::string render_metrics_csv(const LifelongResult& res, NbtConvention convention,
                               std::uint64_t manifest);

std::string render_ledger_csv(const std::vector<TaskReport>& reports, std::uint64_t manifest);
std::vector<TaskReport> parse_ledger_csv(const std::string& text, std::uint64_t expected_manifest);

struct SweepRow {
    std::string parameter;  // "mu" | "order"
    std::string value;      // e.g. "0.5" or "2;0;1"
    std::uint64_t seed = 0;
    double fwt = 0.0;
    double nbt = 0.0;
    double auc = 0.0;
    std::int64_t used_rows = 0;
};

std::string render_sweep_csv(const std::vector<SweepRow>& rows, std::uint64_t manifest);

// Self-contained SVG figures; deterministic byte output.
std::string render_success_curve_svg(const SuccessMatrix& m, std::uint64_t manifest);
std::string render_token_bars_svg(const std::vector<TaskReport>& reports, std::int64_t rows_per_task,
                                  std::uint64_t manifest);
std::string render_sweep_plot_svg(const std::vector<std::string>& labels,
                                  const std::vector<double>& fwt_values, const std::string& x_label,
                                  std::uint64_t manifest);

// Plain-text digest of a finished run (metrics plus the ledger).
std::string render_summary_text(const SuccessMatrix& m, const std::vector<TaskReport>& reports,
                                NbtConvention convention, std::uint64_t manifest);

// Versioned JSON dump of scripted-expert demonstrations for inspection.
std::string render_demos_json(const std::vector<Task>& tasks,
                              const std::vector<std::vector<Demonstration>>& demos,
                              const SuiteParams& params, std::uint64_t manifest);

}  // namespace t2s
