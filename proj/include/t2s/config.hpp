#pragma once

#include <string>

#include "t2s/trainer.hpp"

namespace t2s {

// Desk-scale 10-task defaults; every field can be overridden by key.
LifelongRunConfig default_run_config();

// Applies one key=value pair. Keys use the same names that
// canonical_config_text emits, so a manifest snapshot parses back into the
// config that produced it. Unknown keys and malformed values throw.
void apply_config_kv(LifelongRunConfig& cfg, const std::string& key, const std::string& value);

// Flat structured text: one key=value per line, # comments, blank lines ok.
LifelongRunConfig parse_config_text(const std::string& text,
                                    const LifelongRunConfig& base = default_run_config());

LifelongRunConfig load_config_file(const std::string& path,
                                   const LifelongRunConfig& base = default_run_config());

}  // namespace t2s
