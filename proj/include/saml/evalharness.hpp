// SPDX-License-Identifier: Apache-2.0
//
// Evaluation protocols (few-shot fine-tuning of the retained meta-models,
// zero-shot transfer), the supervised baselines and the episode-shape random
// search.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "saml/metalearn.hpp"

namespace saml {

struct SiteScore {
  int site_id = 0;
  double auc = 0.0;
  std::size_t n = 0;

  bool operator==(const SiteScore&) const = default;
};

struct EvalReport {
  std::string protocol;
  std::vector<SiteScore> per_site;  // ascending site id
  double pooled_auc = 0.0;
  double balanced_accuracy = 0.0;
  std::size_t n = 0;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  // Filled by whoever writes the report; excluded from determinism checks.
  std::string timestamp;
  // Pooled logits and labels behind the numbers above, in per_site order.
  // Kept for permutation tests; not serialized.
  std::vector<double> scores;
  std::vector<int> labels;
};

// Fingerprint of everything that shapes a run: model spec plus meta config.
std::uint64_t config_hash(const ModelSpec& spec, const MetaConfig& config);

// JSON object with fields protocol, per_site[{site, auc, n}], pooled_auc,
// balanced_accuracy, n, config_hash (hex string), seed, timestamp.
std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);
// Header "protocol,site,auc,n"; one row per site then a "pooled" row.
std::string report_to_csv(const EvalReport& report);

struct FewShotOptions {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

// Every retained model is fine-tuned per meta-test site on a class-balanced
// k_support draw with its own learned rate table, then scores the rest of the
// site in t_target chunks until each held-out example is scored once. The
// model whose adapted predictions on the fine-tuning supports have the
// highest pooled AUC is reported; ties go to the better-ranked checkpoint.
EvalReport finetune_few_shot(const CheckpointRing& ring, const SiteTable& table, const MetaConfig& config,
                             const FewShotOptions& options = {});

// Forward passes only over the single zero-shot site.
EvalReport zero_shot_eval(const Checkpoint& checkpoint, const SiteTable& table);

struct BaselineConfig {
  std::size_t batch_size = 16;
  // Training from random weights: pretraining and the scratch baseline.
  double scratch_lr = 3e-4;
  // Fine-tuning a pretrained model.
  double finetune_lr = 1e-4;
  std::size_t finetune_epochs = 20;
  std::size_t finetune_sites = 3;
};

struct BaselineResult {
  EvalReport few_shot;
  // Only filled by the transfer baseline.
  EvalReport zero_shot;
  std::vector<EpochLog> pretrain_log;
  // Parameters entering stage 2.
  ParamSet start;
};

// Stage 1: pooled supervised BCE training on meta_train (AdamW, cosine,
// early stopping on pooled meta_val AUC). Stage 2: fine-tune on k_support
// examples from each of `finetune_sites` meta-test sites and score the held-out
// remainder. Also scores the pretrained model on the zero-shot site.
BaselineResult transfer_baseline(const SiteTable& table, const ModelSpec& spec, const MetaConfig& config,
                                 const BaselineConfig& baseline = {});

// Stage 2 of the transfer baseline from a random initialization.
BaselineResult scratch_baseline(const SiteTable& table, const ModelSpec& spec, const MetaConfig& config,
                                const BaselineConfig& baseline = {});

struct SearchSpace {
  std::vector<std::size_t> n_sites{1, 2, 3, 4, 5, 6};
  std::vector<std::size_t> k_support{10, 12, 15, 18, 20};
  std::vector<std::size_t> t_target{2, 5, 8, 10};
  std::size_t n_trials = 8;
  std::uint64_t seed = 0;
  // Share of the base max_epochs each trial trains for (at least one epoch).
  double budget_fraction = 0.2;
};

struct TrialRecord {
  std::size_t index = 0;
  std::size_t n_sites = 0;
  std::size_t k_support = 0;
  std::size_t t_target = 0;
  bool ok = false;
  double score = 0.0;  // final-epoch validation AUC
  std::string error;
};

struct SearchResult {
  MetaConfig best;
  std::size_t best_index = 0;
  std::vector<TrialRecord> trials;
};

SearchResult random_search(const SearchSpace& space, const SiteTable& table, const ModelSpec& spec,
                           const MetaConfig& base, std::size_t threads = 1);

// CSV with header index,n_sites,k_support,t_target,ok,score,error.
std::string format_trials_csv(const std::vector<TrialRecord>& trials);

}  // namespace saml
