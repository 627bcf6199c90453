// SPDX-License-Identifier: Apache-2.0
#include "saml/metalearn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "saml/errors.hpp"
#include "saml/metrics.hpp"
#include "saml/parallel.hpp"

namespace saml {

std::string to_string(GradOrder order) { return order == GradOrder::second ? "second" : "first"; }

GradOrder parse_grad_order(const std::string& s) {
  if (s == "second") return GradOrder::second;
  if (s == "first") return GradOrder::first;
  throw SpecError("unknown derivative order '" + s + "' (expected first or second)");
}

void validate(const MetaConfig& c) {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw SpecError(std::string(name) + " must be positive");
  };
  auto nonzero = [](std::size_t v, const char* name) {
    if (v == 0) throw SpecError(std::string(name) + " must be at least 1");
  };
  nonzero(c.n_sites_per_episode, "n_sites_per_episode");
  nonzero(c.k_support, "k_support");
  nonzero(c.t_target, "t_target");
  nonzero(c.inner_steps, "inner_steps");
  nonzero(c.max_epochs, "max_epochs");
  nonzero(c.early_stop_patience, "early_stop_patience");
  nonzero(c.episodes_per_epoch, "episodes_per_epoch");
  nonzero(c.val_episodes, "val_episodes");
  nonzero(c.meta_batch_size, "meta_batch_size");
  positive(c.inner_lr_init, "inner_lr_init");
  positive(c.meta_lr, "meta_lr");
  positive(c.lslr_lr, "lslr_lr");
  if (!(c.weight_decay >= 0.0)) throw SpecError("weight_decay must be non-negative");
  if (c.early_stop_patience > c.max_epochs) throw SpecError("early_stop_patience must not exceed max_epochs");
}

void write_meta_config(ByteWriter& w, const MetaConfig& c) {
  w.u64(c.n_sites_per_episode);
  w.u64(c.k_support);
  w.u64(c.t_target);
  w.u64(c.inner_steps);
  w.f64(c.inner_lr_init);
  w.f64(c.meta_lr);
  w.f64(c.weight_decay);
  w.u8(static_cast<std::uint8_t>(c.order));
  w.u64(c.msl_anneal_epochs);
  w.u64(c.max_epochs);
  w.u64(c.early_stop_patience);
  w.u64(c.episodes_per_epoch);
  w.u64(c.val_episodes);
  w.u64(c.seed);
  w.u64(c.meta_batch_size);
  w.f64(c.lslr_lr);
}

MetaConfig read_meta_config(ByteReader& r) {
  MetaConfig c;
  c.n_sites_per_episode = r.u64();
  c.k_support = r.u64();
  c.t_target = r.u64();
  c.inner_steps = r.u64();
  c.inner_lr_init = r.f64();
  c.meta_lr = r.f64();
  c.weight_decay = r.f64();
  const auto order = r.u8();
  if (order > 1) throw FormatError("meta config: unknown derivative order tag");
  c.order = static_cast<GradOrder>(order);
  c.msl_anneal_epochs = r.u64();
  c.max_epochs = r.u64();
  c.early_stop_patience = r.u64();
  c.episodes_per_epoch = r.u64();
  c.val_episodes = r.u64();
  c.seed = r.u64();
  c.meta_batch_size = r.u64();
  c.lslr_lr = r.f64();
  return c;
}

// ---- learnable rates -----------------------------------------------------------

LearnableLRTable::LearnableLRTable(const ParamSet& params, std::size_t steps, double init) : steps_(steps) {
  if (steps == 0) throw SpecError("learnable LR table: steps must be at least 1");
  if (!(init >= 0.0) || !std::isfinite(init)) throw SpecError("learnable LR table: rates must be non-negative");
  for (const auto& [name, t] : params) {
    names_.push_back(name);
    for (std::size_t s = 0; s < steps; ++s) rates_.add(name + "@" + std::to_string(s), Tensor::variable({1}, {init}));
  }
}

LearnableLRTable LearnableLRTable::sgd_step(const ParamSet& grads, double lr) const {
  require_congruent(rates_, grads, "LearnableLRTable::sgd_step");
  LearnableLRTable next = *this;
  std::vector<Tensor> updated;
  for (std::size_t i = 0; i < rates_.size(); ++i) {
    const double v = std::max(rates_[i].item() - lr * grads[i].item(), kFloor);
    updated.push_back(Tensor::variable({1}, {v}));
  }
  next.rates_ = rates_.with_tensors(std::move(updated));
  return next;
}

bool LearnableLRTable::identical(const LearnableLRTable& other) const {
  return names_ == other.names_ && steps_ == other.steps_ && rates_.identical(other.rates_);
}

void LearnableLRTable::write(ByteWriter& w) const {
  w.u64(names_.size());
  for (const auto& n : names_) w.str(n);
  w.u64(steps_);
  for (const auto& [name, t] : rates_) w.f64(t.item());
}

LearnableLRTable LearnableLRTable::read(ByteReader& r) {
  LearnableLRTable table;
  const auto n = r.u64();
  if (n > 4096) throw FormatError("LR table: implausible layer count");
  for (std::uint64_t i = 0; i < n; ++i) table.names_.push_back(r.str());
  table.steps_ = r.u64();
  if (table.steps_ > 4096) throw FormatError("LR table: implausible step count");
  for (const auto& name : table.names_)
    for (std::size_t s = 0; s < table.steps_; ++s)
      table.rates_.add(name + "@" + std::to_string(s), Tensor::variable({1}, {r.f64()}));
  return table;
}

// ---- inner loop -------------------------------------------------------------------

SiteLossFn bce_loss(const ModelSpec& spec) {
  return [spec](const ParamSet& params, const Batch& batch) { return batch_loss(spec, params, batch); };
}

ParamSet inner_adapt(const SiteLossFn& loss_fn, const ParamSet& params, const Batch& support,
                     const LearnableLRTable& lr_table, std::size_t step, GradOrder order) {
  if (step >= lr_table.steps()) {
    throw SpecError("inner_adapt: step " + std::to_string(step) + " outside the " +
                    std::to_string(lr_table.steps()) + "-step rate table");
  }
  if (lr_table.layers() != params.size()) throw CongruenceError("inner_adapt: rate table does not match parameters");
  ParamSet g;
  try {
    g = grad(loss_fn(params, support), params, order == GradOrder::second);
  } catch (const NonFiniteError& e) {
    throw NonFiniteError("inner step " + std::to_string(step) + ": " + e.what());
  }
  std::vector<Tensor> adapted;
  adapted.reserve(params.size());
  for (std::size_t j = 0; j < params.size(); ++j) {
    adapted.push_back(sub(params[j], mul_scalar(g[j], lr_table.rate(j, step))));
  }
  return params.with_tensors(std::move(adapted));
}

ParamSet inner_adapt(const ModelSpec& spec, const ParamSet& params, const Batch& support,
                     const LearnableLRTable& lr_table, std::size_t step, GradOrder order) {
  return inner_adapt(bce_loss(spec), params, support, lr_table, step, order);
}

std::vector<double> msl_weights(std::size_t epoch, std::size_t inner_steps, std::size_t anneal_epochs) {
  if (inner_steps == 0) return {};
  const double progress =
      anneal_epochs == 0 ? 1.0 : std::min(1.0, static_cast<double>(epoch) / static_cast<double>(anneal_epochs));
  const double shared = (1.0 - progress) / static_cast<double>(inner_steps);
  std::vector<double> w(inner_steps, shared);
  w.back() = shared + progress;
  return w;
}

EpisodeLoss episode_loss(const SiteLossFn& loss_fn, const ParamSet& meta_params, const Episode& episode,
                         const LearnableLRTable& lr_table, const MetaConfig& config, std::size_t epoch) {
  if (episode.sites.empty()) throw EpisodeError("episode_loss: empty episode");
  const auto weights = msl_weights(epoch, config.inner_steps, config.msl_anneal_epochs);
  EpisodeLoss out;
  Tensor total;
  for (const auto& site : episode.sites) {
    if (site.support.size() != config.k_support || site.target.size() != config.t_target) {
      throw EpisodeError("episode_loss: site " + std::to_string(site.site_id) + " has " +
                         std::to_string(site.support.size()) + "/" + std::to_string(site.target.size()) +
                         " support/target examples, config expects " + std::to_string(config.k_support) + "/" +
                         std::to_string(config.t_target));
    }
    AdaptationTrace trace;
    trace.params_per_step.push_back(meta_params);
    ParamSet theta = meta_params;
    Tensor site_loss;
    for (std::size_t s = 0; s < config.inner_steps; ++s) {
      theta = inner_adapt(loss_fn, theta, site.support, lr_table, s, config.order);
      Tensor target_loss;
      try {
        target_loss = loss_fn(theta, site.target);
      } catch (const NonFiniteError& e) {
        throw NonFiniteError("target loss after inner step " + std::to_string(s) + ": " + e.what());
      }
      trace.params_per_step.push_back(theta);
      trace.target_loss_per_step.push_back(target_loss.item());
      if (weights[s] == 0.0) continue;
      const Tensor weighted = scale(target_loss, weights[s]);
      site_loss = site_loss.defined() ? add(site_loss, weighted) : weighted;
    }
    total = total.defined() ? add(total, site_loss) : site_loss;
    out.traces.push_back(std::move(trace));
  }
  out.loss = scale(total, 1.0 / static_cast<double>(episode.sites.size()));
  return out;
}

EpisodeLoss episode_loss(const ModelSpec& spec, const ParamSet& meta_params, const Episode& episode,
                         const LearnableLRTable& lr_table, const MetaConfig& config, std::size_t epoch) {
  return episode_loss(bce_loss(spec), meta_params, episode, lr_table, config, epoch);
}

ParamSet adapt_for_eval(const ModelSpec& spec, const ParamSet& params, const Batch& support,
                        const LearnableLRTable& lr_table, std::size_t steps) {
  ParamSet theta = params.as_variables();
  for (std::size_t s = 0; s < steps; ++s) {
    const ParamSet g = grad(batch_loss(spec, theta, support), theta, false);
    NoGradGuard no_grad;
    std::vector<Tensor> next;
    for (std::size_t j = 0; j < theta.size(); ++j) {
      next.push_back(sub(theta[j], scale(g[j], lr_table.value(j, std::min(s, lr_table.steps() - 1)))));
    }
    theta = theta.with_tensors(std::move(next)).as_variables();
  }
  return theta.detached();
}

// ---- outer loop ---------------------------------------------------------------------

MetaStepResult meta_step(const SiteLossFn& loss_fn, const MetaState& state, std::span<const Episode> episodes,
                         const MetaConfig& config, std::size_t epoch, std::size_t threads) {
  if (episodes.empty()) throw EpisodeError("meta_step: empty episode batch");
  std::vector<Tensor> losses(episodes.size());
  parallel_for(episodes.size(), threads, [&](std::size_t i) {
    losses[i] = episode_loss(loss_fn, state.params, episodes[i], state.lr_table, config, epoch).loss;
  });
  Tensor total = losses[0];
  for (std::size_t i = 1; i < losses.size(); ++i) total = add(total, losses[i]);
  total = scale(total, 1.0 / static_cast<double>(losses.size()));

  // One reverse sweep for both the meta-parameters and the rates.
  std::vector<Tensor> wrt = state.params.tensors();
  const auto rate_tensors = state.lr_table.rates().tensors();
  wrt.insert(wrt.end(), rate_tensors.begin(), rate_tensors.end());
  auto grads = grad(total, std::span<const Tensor>(wrt), false);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    for (double v : grads[i].data()) {
      if (!std::isfinite(v)) throw NonFiniteError("meta_step: non-finite meta-gradient");
    }
  }
  const auto split = grads.begin() + static_cast<std::ptrdiff_t>(state.params.size());
  const ParamSet grads_theta = state.params.with_tensors({grads.begin(), split});
  const ParamSet grads_lr = state.lr_table.rates().with_tensors({split, grads.end()});

  MetaStepResult result;
  result.state.outer = state.outer;
  const std::uint64_t step = state.outer.adam.step + 1;
  result.outer_lr = cosine_lr(config.meta_lr, step, state.outer.total_steps);
  AdamOptions adam;
  adam.weight_decay = config.weight_decay;
  result.state.params = adamw_step(state.params, grads_theta, result.state.outer.adam, result.outer_lr, adam);
  result.state.lr_table = state.lr_table.sgd_step(grads_lr, config.lslr_lr);
  result.loss = total.item();
  return result;
}

MetaStepResult meta_step(const ModelSpec& spec, const MetaState& state, std::span<const Episode> episodes,
                         const MetaConfig& config, std::size_t epoch, std::size_t threads) {
  return meta_step(bce_loss(spec), state, episodes, config, epoch, threads);
}

bool EarlyStopper::update(double score) {
  if (!seen_ || score > best_) {
    seen_ = true;
    best_ = score;
    stale_ = 0;
    return false;
  }
  return ++stale_ >= patience_;
}

// ---- checkpoints --------------------------------------------------------------------

namespace {
constexpr std::string_view kCkptMagic = "SAMLCKPT";
constexpr std::uint32_t kCkptVersion = 1;
}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  ByteWriter w;
  w.bytes(kCkptMagic);
  w.u32(kCkptVersion);
  write_model_spec(w, ckpt.spec);
  write_params(w, ckpt.params);
  ckpt.lr_table.write(w);
  write_meta_config(w, ckpt.config);
  w.f64(ckpt.val_score);
  w.u64(ckpt.epoch);
  return w.take();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  ByteReader r(bytes);
  if (bytes.size() < kCkptMagic.size() || r.bytes(kCkptMagic.size()) != kCkptMagic) {
    throw FormatError("checkpoint: bad magic");
  }
  const auto version = r.u32();
  if (version != kCkptVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  Checkpoint c;
  c.spec = read_model_spec(r);
  c.params = read_params(r);
  c.lr_table = LearnableLRTable::read(r);
  c.config = read_meta_config(r);
  c.val_score = r.f64();
  c.epoch = r.u64();
  if (!r.done()) throw FormatError("checkpoint: trailing bytes");
  const auto layout = param_layout(c.spec);
  if (layout.size() != c.params.size() || c.lr_table.layers() != c.params.size()) {
    throw FormatError("checkpoint: parameters do not match the model spec");
  }
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) { write_file(path, encode_checkpoint(ckpt)); }
Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

bool CheckpointRing::offer(Checkpoint ckpt) {
  auto before = [](const Checkpoint& a, const Checkpoint& b) {
    if (a.val_score != b.val_score) return a.val_score > b.val_score;
    return a.epoch < b.epoch;
  };
  auto pos = std::upper_bound(entries_.begin(), entries_.end(), ckpt, before);
  if (static_cast<std::size_t>(pos - entries_.begin()) >= capacity_) return false;
  entries_.insert(pos, std::move(ckpt));
  if (entries_.size() > capacity_) entries_.pop_back();
  return true;
}

// ---- training loop -----------------------------------------------------------------

std::string format_log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,train_loss,val_auc,outer_lr\n";
  for (const auto& row : log) os << row.epoch << ',' << row.train_loss << ',' << row.val_auc << ',' << row.outer_lr << '\n';
  return os.str();
}

double adapted_auc(const ModelSpec& spec, const ParamSet& params, const LearnableLRTable& lr_table,
                   std::span<const Episode> episodes, std::size_t inner_steps) {
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& ep : episodes) {
    for (const auto& site : ep.sites) {
      const ParamSet adapted = adapt_for_eval(spec, params, site.support, lr_table, inner_steps);
      NoGradGuard no_grad;
      const Tensor logits = forward(spec, adapted, site.target.features);
      scores.insert(scores.end(), logits.data().begin(), logits.data().end());
      for (double y : site.target.labels.data()) labels.push_back(static_cast<int>(y));
    }
  }
  return roc_auc(scores, labels);
}

namespace {
std::mt19937_64 stream(std::uint64_t seed, std::uint32_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), purpose};
  return std::mt19937_64(seq);
}
}  // namespace

TrainResult meta_train(const SiteTable& table, const ModelSpec& spec, const MetaConfig& config,
                       const TrainOptions& options) {
  validate(config);
  validate(spec);
  if (table.role(Role::meta_train).empty() || table.role(Role::meta_val).empty()) {
    throw PreconditionError("meta_train: meta_train and meta_val roles must be populated");
  }
  if (Shape(table.feature_shape) != spec.input_shape) {
    throw ShapeError("meta_train: dataset features " + shape_str(table.feature_shape) +
                     " do not match model input " + shape_str(spec.input_shape));
  }

  auto train_rng = stream(config.seed, 1);
  // The validation episodes are drawn once and reused every epoch.
  auto val_rng = stream(config.seed, 2);
  std::vector<Episode> val_set;
  for (std::size_t i = 0; i < config.val_episodes; ++i) {
    val_set.push_back(sample_episode(table, Role::meta_val, config.n_sites_per_episode, config.k_support,
                                     config.t_target, val_rng));
  }

  TrainResult result;
  MetaState state;
  state.params = options.initial_params ? options.initial_params->as_variables() : init_params(spec, config.seed);
  state.lr_table = LearnableLRTable(state.params, config.inner_steps, config.inner_lr_init);
  const std::size_t steps_per_epoch =
      (config.episodes_per_epoch + config.meta_batch_size - 1) / config.meta_batch_size;
  state.outer.total_steps = static_cast<std::uint64_t>(config.max_epochs) * steps_per_epoch;

  EarlyStopper stopper(config.early_stop_patience);
  std::size_t consecutive_aborts = 0;
  result.stop_reason = "max_epochs";
  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    double outer_lr = 0.0;
    bool diverged = false;
    for (std::size_t done = 0; done < config.episodes_per_epoch;) {
      std::vector<Episode> batch;
      for (std::size_t b = 0; b < config.meta_batch_size && done < config.episodes_per_epoch; ++b, ++done) {
        batch.push_back(sample_episode(table, Role::meta_train, config.n_sites_per_episode, config.k_support,
                                       config.t_target, train_rng));
      }
      try {
        auto step = meta_step(spec, state, batch, config, epoch, options.threads);
        state = std::move(step.state);
        loss_sum += step.loss;
        ++loss_count;
        outer_lr = step.outer_lr;
        consecutive_aborts = 0;
      } catch (const NonFiniteError&) {
        if (++consecutive_aborts >= 2) {
          diverged = true;
          break;
        }
      }
    }
    EpochLog row;
    row.epoch = epoch;
    row.train_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : std::numeric_limits<double>::quiet_NaN();
    row.outer_lr = outer_lr;
    if (!diverged) {
      row.val_auc = adapted_auc(spec, state.params, state.lr_table, val_set, config.inner_steps);
      Checkpoint ckpt{spec, state.params.detached(), state.lr_table, config, row.val_auc, epoch};
      result.ring.offer(std::move(ckpt));
    } else {
      row.val_auc = std::numeric_limits<double>::quiet_NaN();
    }
    result.log.push_back(row);
    if (options.on_epoch) options.on_epoch(row);
    if (diverged) {
      result.stop_reason = "non_finite";
      break;
    }
    if (stopper.update(row.val_auc)) {
      result.stop_reason = "early_stop";
      break;
    }
  }
  result.final_state = std::move(state);
  return result;
}

}  // namespace saml
