#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace t2s {

struct GradCheckEntry {
    std::string component;
    double max_rel_err = 0.0;  // absolute gradient magnitude for the shared-row audit
    double tolerance = 0.0;    // 0 means exact
    bool pass = false;
};

// Central finite differences against the tape for the attention paths and
// the cloning loss, plus an exact-zero audit of shared-row gradients in
// split mode. Deterministic in the seed.
std::vector<GradCheckEntry> run_gradcheck(std::uint64_t seed, double tol = 1e-4);

bool gradcheck_passed(const std::vector<GradCheckEntry>& entries);

}  // namespace t2s
