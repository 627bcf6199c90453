// SPDX-License-Identifier: Apache-2.0
//
// Bilevel optimizer over sites: inner-loop adaptation on a support set with
// per-parameter, per-step learnable rates; target-set loss after every inner
// step weighted by an annealed schedule; second- or first-order meta-gradient;
// AdamW outer update on a cosine schedule; top-k checkpointing and early
// stopping on validation ROC-AUC.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "saml/backbone.hpp"
#include "saml/episodes.hpp"
#include "saml/optim.hpp"
#include "saml/param_set.hpp"
#include "saml/serialize.hpp"

namespace saml {

enum class GradOrder : std::uint8_t { second = 0, first = 1 };
std::string to_string(GradOrder order);
GradOrder parse_grad_order(const std::string& s);

struct MetaConfig {
  std::size_t n_sites_per_episode = 1;
  std::size_t k_support = 20;
  std::size_t t_target = 10;
  std::size_t inner_steps = 5;
  double inner_lr_init = 0.05;
  double meta_lr = 1e-3;
  double weight_decay = 1e-4;
  GradOrder order = GradOrder::second;
  std::size_t msl_anneal_epochs = 10;
  std::size_t max_epochs = 30;
  std::size_t early_stop_patience = 20;
  std::size_t episodes_per_epoch = 50;
  std::size_t val_episodes = 30;
  std::uint64_t seed = 0;
  // Episodes averaged per outer update.
  std::size_t meta_batch_size = 1;
  // Plain-SGD rate of the learning-rule optimizer that trains the inner rates.
  double lslr_lr = 1e-3;

  bool operator==(const MetaConfig&) const = default;
};

// Throws SpecError on non-positive rates, zero steps/epochs/sizes or a
// patience longer than max_epochs.
void validate(const MetaConfig& config);

void write_meta_config(ByteWriter& w, const MetaConfig& config);
MetaConfig read_meta_config(ByteReader& r);

// lr[layer][step], one positive scalar per parameter tensor per inner step.
class LearnableLRTable {
 public:
  static constexpr double kFloor = 1e-8;

  LearnableLRTable() = default;
  // All rates set to `init`. Zero is accepted so tests can disable adaptation.
  LearnableLRTable(const ParamSet& params, std::size_t steps, double init);

  std::size_t layers() const { return names_.size(); }
  std::size_t steps() const { return steps_; }
  const std::vector<std::string>& layer_names() const { return names_; }

  // Graph-linked scalar leaf.
  const Tensor& rate(std::size_t layer, std::size_t step) const { return rates_[layer * steps_ + step]; }
  double value(std::size_t layer, std::size_t step) const { return rate(layer, step).item(); }
  // Every rate as a ParamSet entry "<param>@<step>".
  const ParamSet& rates() const { return rates_; }

  // Plain SGD on the rates, clamped at kFloor.
  LearnableLRTable sgd_step(const ParamSet& grads, double lr) const;

  bool identical(const LearnableLRTable& other) const;

  void write(ByteWriter& w) const;
  static LearnableLRTable read(ByteReader& r);

 private:
  std::vector<std::string> names_;
  std::size_t steps_ = 0;
  ParamSet rates_;
};

struct AdaptationTrace {
  std::vector<ParamSet> params_per_step;    // inner_steps + 1 entries, [0] is theta
  std::vector<double> target_loss_per_step;  // inner_steps entries
};

// Scalar loss of a parameter set on a batch. The model-spec overloads below
// use the mean BCE of the classifier; tests plug in analytic losses.
using SiteLossFn = std::function<Tensor(const ParamSet&, const Batch&)>;
SiteLossFn bce_loss(const ModelSpec& spec);

// theta' = theta - lr[layer][step] * grad L_support(theta). With
// GradOrder::second the gradient stays graph-linked so the result can be
// differentiated through; with GradOrder::first it is a constant.
ParamSet inner_adapt(const SiteLossFn& loss_fn, const ParamSet& params, const Batch& support,
                     const LearnableLRTable& lr_table, std::size_t step, GradOrder order);
ParamSet inner_adapt(const ModelSpec& spec, const ParamSet& params, const Batch& support,
                     const LearnableLRTable& lr_table, std::size_t step, GradOrder order);

// Multi-step loss weights: uniform at epoch 0, annealed linearly so that from
// `anneal_epochs` on the final step carries all of the weight.
std::vector<double> msl_weights(std::size_t epoch, std::size_t inner_steps, std::size_t anneal_epochs);

struct EpisodeLoss {
  Tensor loss;  // differentiable w.r.t. meta-params and the rate table
  std::vector<AdaptationTrace> traces;  // one per site in the episode
};

EpisodeLoss episode_loss(const SiteLossFn& loss_fn, const ParamSet& meta_params, const Episode& episode,
                         const LearnableLRTable& lr_table, const MetaConfig& config, std::size_t epoch);
EpisodeLoss episode_loss(const ModelSpec& spec, const ParamSet& meta_params, const Episode& episode,
                         const LearnableLRTable& lr_table, const MetaConfig& config, std::size_t epoch);

// inner_steps of first-order adaptation with no meta-gradient bookkeeping;
// used to fine-tune at evaluation time. Returns constants.
ParamSet adapt_for_eval(const ModelSpec& spec, const ParamSet& params, const Batch& support,
                        const LearnableLRTable& lr_table, std::size_t steps);

struct OuterState {
  AdamState adam;
  std::uint64_t total_steps = 1;
};

struct MetaState {
  ParamSet params;
  LearnableLRTable lr_table;
  OuterState outer;
};

struct MetaStepResult {
  MetaState state;
  double loss = 0.0;
  double outer_lr = 0.0;
};

// Averages the episode losses in batch order, backpropagates to the
// meta-parameters and the rate table, applies AdamW to the former and SGD to
// the latter. Throws (leaving `state` untouched) on a non-finite loss or
// gradient. Episode losses are built on up to `threads` workers.
MetaStepResult meta_step(const SiteLossFn& loss_fn, const MetaState& state, std::span<const Episode> episodes,
                         const MetaConfig& config, std::size_t epoch, std::size_t threads = 1);
MetaStepResult meta_step(const ModelSpec& spec, const MetaState& state, std::span<const Episode> episodes,
                         const MetaConfig& config, std::size_t epoch, std::size_t threads = 1);

// Stops once the score has failed to improve for `patience` consecutive
// updates.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience) : patience_(patience) {}
  // Returns true when training should stop.
  bool update(double score);
  double best() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t stale_ = 0;
  double best_ = -1.0;
  bool seen_ = false;
};

struct Checkpoint {
  ModelSpec spec;
  ParamSet params;
  LearnableLRTable lr_table;
  MetaConfig config;
  double val_score = 0.0;
  std::uint64_t epoch = 0;
};

// "SAMLCKPT" | u32 version | model spec | params | rate table | config |
// f64 validation score | u64 epoch
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Best-k checkpoints by validation score, descending; equal scores keep the
// earlier epoch first.
class CheckpointRing {
 public:
  static constexpr std::size_t kCapacity = 5;

  explicit CheckpointRing(std::size_t capacity = kCapacity) : capacity_(capacity) {}

  // Returns true when the checkpoint was retained.
  bool offer(Checkpoint ckpt);
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t capacity() const { return capacity_; }
  const Checkpoint& operator[](std::size_t i) const { return entries_.at(i); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::size_t capacity_;
  std::vector<Checkpoint> entries_;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_auc = 0.0;
  double outer_lr = 0.0;
};

std::string format_log_csv(const std::vector<EpochLog>& log);

struct TrainResult {
  CheckpointRing ring;
  std::vector<EpochLog> log;
  MetaState final_state;
  std::string stop_reason;
};

struct TrainOptions {
  std::size_t threads = 1;
  // Called after every epoch; lets callers persist the partial log.
  std::function<void(const EpochLog&)> on_epoch;
  // Overrides the initial meta-parameters (defaults to init_params(spec, seed)).
  std::optional<ParamSet> initial_params;
};

// Pooled ROC-AUC of adapted predictions on the target sets of `episodes`.
double adapted_auc(const ModelSpec& spec, const ParamSet& params, const LearnableLRTable& lr_table,
                   std::span<const Episode> episodes, std::size_t inner_steps);

TrainResult meta_train(const SiteTable& table, const ModelSpec& spec, const MetaConfig& config,
                       const TrainOptions& options = {});

}  // namespace saml
