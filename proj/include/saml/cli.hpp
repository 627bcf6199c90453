// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Every command resolves its settings from built-in
// defaults, then an optional INI file (--config), then flags, and writes the
// result to <out>/resolved_<command>.ini before doing any work. That file
// alone, passed back through --config, reruns the command.
//
// INI sections and keys (flags use the key name, with '-' accepted for '_'):
//   [cli]         command data out checkpoints kind seed threads
//   [episodes]    sites split n_per_site heterogeneity feature_dim
//                 class_separation offset_scale volume_extent
//   [backbone]    arch (auto|mlp|vgg_tiny) hidden conv_channels dense_width
//   [metalearn]   every MetaConfig field except seed
//   [evalharness] batch_size scratch_lr finetune_lr finetune_epochs
//                 finetune_sites n_trials budget_fraction search_n_sites
//                 search_k_support search_t_target
//
// Outputs under --out:
//   gen-data, preprocess  dataset.bin
//   meta-train            checkpoints/rank<i>.ckpt (best first), train_log.csv
//   meta-test             few_shot.json, few_shot.csv
//   zero-shot             zero_shot.json, zero_shot.csv
//   baseline              <kind>.json/.csv; transfer also writes
//                         transfer_zero_shot.json/.csv and pretrain_log.csv
//   search                trials.csv, best_config.ini
//   report                summary.txt (also printed)
//
// Report JSON: {protocol, per_site: [{site, auc, n}], pooled_auc,
// balanced_accuracy, n, config_hash, seed, timestamp}. Only timestamp varies
// between identical runs.
#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace saml::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace saml::cli
