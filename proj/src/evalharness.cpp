// SPDX-License-Identifier: Apache-2.0
#include "saml/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "saml/errors.hpp"
#include "saml/metrics.hpp"
#include "saml/optim.hpp"
#include "saml/parallel.hpp"

namespace saml {

namespace {

using json = nlohmann::ordered_json;

// Purposes for the per-protocol random streams.
constexpr std::uint32_t kFewShotStream = 3;
constexpr std::uint32_t kFineTuneStream = 4;
constexpr std::uint32_t kSearchStream = 5;
constexpr std::uint32_t kPretrainStream = 6;

std::mt19937_64 stream(std::uint64_t seed, std::uint32_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), purpose};
  return std::mt19937_64(seq);
}

std::vector<int> sorted_role(const SiteTable& table, Role role) {
  std::vector<int> ids = table.role(role);
  std::sort(ids.begin(), ids.end());
  return ids;
}

struct SitePredictions {
  int site_id = 0;
  std::vector<double> scores;
  std::vector<int> labels;
};

EvalReport summarize(std::string protocol, const std::vector<SitePredictions>& sites) {
  EvalReport r;
  r.protocol = std::move(protocol);
  for (const auto& s : sites) {
    r.per_site.push_back({s.site_id, roc_auc(s.scores, s.labels), s.scores.size()});
    r.scores.insert(r.scores.end(), s.scores.begin(), s.scores.end());
    r.labels.insert(r.labels.end(), s.labels.begin(), s.labels.end());
  }
  r.n = r.scores.size();
  r.pooled_auc = roc_auc(r.scores, r.labels);
  r.balanced_accuracy = balanced_accuracy(r.scores, r.labels);
  return r;
}

std::vector<double> predict(const ModelSpec& spec, const ParamSet& params, const Batch& batch) {
  NoGradGuard no_grad;
  const Tensor logits = forward(spec, params, batch.features);
  return {logits.data().begin(), logits.data().end()};
}

std::vector<int> int_labels(const Batch& batch) {
  std::vector<int> y;
  for (double v : batch.labels.data()) y.push_back(static_cast<int>(v));
  return y;
}

Batch pool_role(const SiteTable& table, Role role) {
  std::vector<Batch> parts;
  for (int id : sorted_role(table, role)) {
    const auto& site = table.site(id);
    std::vector<std::size_t> all(site.size());
    std::iota(all.begin(), all.end(), 0);
    parts.push_back(make_batch(site, all));
  }
  if (parts.empty()) throw PreconditionError("role " + to_string(role) + " has no sites");
  return concat(parts);
}

EvalReport zero_shot_report(const ModelSpec& spec, const ParamSet& params, const SiteTable& table) {
  const auto& ids = table.role(Role::zero_shot);
  if (ids.size() != 1) {
    throw PreconditionError("zero-shot evaluation needs exactly one zero_shot site, found " +
                            std::to_string(ids.size()));
  }
  const auto& site = table.site(ids[0]);
  SitePredictions p{site.site_id, {}, site.labels};
  // Chunked so mosaic-sized inputs stay within memory.
  constexpr std::size_t kChunk = 64;
  for (std::size_t lo = 0; lo < site.size(); lo += kChunk) {
    std::vector<std::size_t> idx(std::min(kChunk, site.size() - lo));
    std::iota(idx.begin(), idx.end(), lo);
    const auto s = predict(spec, params, make_batch(site, idx));
    p.scores.insert(p.scores.end(), s.begin(), s.end());
  }
  return summarize("zero_shot", {p});
}

// Minibatch AdamW on mean BCE with a cosine schedule. With a validation batch,
// stops after `patience` epochs without a pooled-AUC improvement and returns
// the best epoch's parameters.
ParamSet supervised_fit(const ModelSpec& spec, ParamSet params, const Batch& train, const Batch* val,
                        std::size_t epochs, double lr, double weight_decay, std::size_t batch_size,
                        std::size_t patience, std::mt19937_64& rng, std::vector<EpochLog>* log) {
  params = params.as_variables();
  if (epochs == 0 || train.size() == 0) return params.detached();
  const std::size_t n = train.size();
  const std::size_t steps_per_epoch = (n + batch_size - 1) / batch_size;
  const std::uint64_t total = epochs * steps_per_epoch;
  AdamState adam;
  AdamOptions options;
  options.weight_decay = weight_decay;

  std::vector<double> train_x(train.features.data().begin(), train.features.data().end());
  const std::size_t per = train.features.numel() / n;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::vector<int> val_labels = val ? int_labels(*val) : std::vector<int>{};

  ParamSet best = params.detached();
  EarlyStopper stopper(patience);
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0, step_lr = 0.0;
    for (std::size_t lo = 0; lo < n; lo += batch_size) {
      const std::size_t m = std::min(batch_size, n - lo);
      std::vector<double> x(m * per), y(m);
      for (std::size_t i = 0; i < m; ++i) {
        const std::size_t e = order[lo + i];
        std::copy_n(train_x.begin() + static_cast<std::ptrdiff_t>(e * per), per,
                    x.begin() + static_cast<std::ptrdiff_t>(i * per));
        y[i] = train.labels.at(e);
      }
      Shape shape = train.features.shape();
      shape[0] = m;
      const Batch mb{Tensor(std::move(shape), std::move(x)), Tensor({m}, std::move(y))};
      const Tensor loss = batch_loss(spec, params, mb);
      const ParamSet g = grad(loss, params, false);
      step_lr = cosine_lr(lr, adam.step + 1, total);
      params = adamw_step(params, g, adam, step_lr, options);
      loss_sum += loss.item() * static_cast<double>(m);
    }
    EpochLog row{epoch, loss_sum / static_cast<double>(n), std::numeric_limits<double>::quiet_NaN(), step_lr};
    if (val) {
      row.val_auc = roc_auc(predict(spec, params, *val), val_labels);
      if (row.val_auc > stopper.best() || epoch == 0) best = params.detached();
    }
    if (log) log->push_back(row);
    if (val && stopper.update(row.val_auc)) break;
  }
  return val ? best : params.detached();
}

struct FineTuneSplit {
  int site_id = 0;
  Batch support;
  std::vector<Batch> chunks;  // held-out remainder in t_target pieces
};

std::vector<FineTuneSplit> draw_splits(const SiteTable& table, const std::vector<int>& ids, std::size_t k,
                                       std::size_t chunk, std::mt19937_64& rng) {
  std::vector<FineTuneSplit> out;
  for (int id : ids) {
    const auto& site = table.site(id);
    if (site.size() < k + 1) {
      throw EpisodeError("site " + std::to_string(id) + " has " + std::to_string(site.size()) +
                         " examples, fine-tuning needs at least " + std::to_string(k + 1));
    }
    std::vector<std::size_t> rest;
    const auto support = balanced_support(site, k, rng, &rest);
    std::shuffle(rest.begin(), rest.end(), rng);
    FineTuneSplit s{id, make_batch(site, support), {}};
    for (std::size_t lo = 0; lo < rest.size(); lo += chunk) {
      const auto hi = std::min(rest.size(), lo + chunk);
      s.chunks.push_back(make_batch(site, {rest.begin() + static_cast<std::ptrdiff_t>(lo),
                                           rest.begin() + static_cast<std::ptrdiff_t>(hi)}));
    }
    out.push_back(std::move(s));
  }
  return out;
}

SitePredictions score_chunks(const ModelSpec& spec, const ParamSet& params, const FineTuneSplit& split) {
  SitePredictions p{split.site_id, {}, {}};
  for (const auto& c : split.chunks) {
    const auto s = predict(spec, params, c);
    const auto y = int_labels(c);
    p.scores.insert(p.scores.end(), s.begin(), s.end());
    p.labels.insert(p.labels.end(), y.begin(), y.end());
  }
  return p;
}

BaselineResult run_stage_two(const SiteTable& table, const ModelSpec& spec, const MetaConfig& config,
                             const BaselineConfig& baseline, const ParamSet& start, double lr, std::string protocol) {
  if (config.k_support == 0) throw PreconditionError(protocol + ": k_support must be positive");
  if (baseline.batch_size == 0) throw PreconditionError(protocol + ": batch_size must be positive");
  const auto ids = sorted_role(table, Role::meta_test);
  if (ids.size() < baseline.finetune_sites) {
    throw PreconditionError(protocol + ": meta_test has " + std::to_string(ids.size()) + " sites, need " +
                            std::to_string(baseline.finetune_sites));
  }
  auto rng = stream(config.seed, kFineTuneStream);
  std::vector<int> chosen;
  std::sample(ids.begin(), ids.end(), std::back_inserter(chosen), static_cast<std::ptrdiff_t>(baseline.finetune_sites),
              rng);
  const auto splits = draw_splits(table, chosen, config.k_support, config.t_target, rng);
  std::vector<Batch> supports;
  for (const auto& s : splits) supports.push_back(s.support);
  const ParamSet tuned = supervised_fit(spec, start, concat(supports), nullptr, baseline.finetune_epochs,
                                        lr, config.weight_decay, baseline.batch_size, 0, rng, nullptr);
  std::vector<SitePredictions> preds;
  for (const auto& s : splits) preds.push_back(score_chunks(spec, tuned, s));
  BaselineResult out;
  out.start = start.detached();
  out.few_shot = summarize(std::move(protocol), preds);
  out.few_shot.config_hash = config_hash(spec, config);
  out.few_shot.seed = config.seed;
  return out;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::uint64_t config_hash(const ModelSpec& spec, const MetaConfig& config) {
  ByteWriter w;
  write_model_spec(w, spec);
  write_meta_config(w, config);
  return fnv1a(w.buffer());
}

// ---- reports ------------------------------------------------------------------------

std::string report_to_json(const EvalReport& r) {
  json j;
  j["protocol"] = r.protocol;
  j["per_site"] = json::array();
  for (const auto& s : r.per_site) j["per_site"].push_back({{"site", s.site_id}, {"auc", s.auc}, {"n", s.n}});
  j["pooled_auc"] = r.pooled_auc;
  j["balanced_accuracy"] = r.balanced_accuracy;
  j["n"] = r.n;
  j["config_hash"] = hex64(r.config_hash);
  j["seed"] = r.seed;
  j["timestamp"] = r.timestamp;
  return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    EvalReport r;
    r.protocol = j.at("protocol").get<std::string>();
    for (const auto& s : j.at("per_site")) {
      r.per_site.push_back({s.at("site").get<int>(), s.at("auc").get<double>(), s.at("n").get<std::size_t>()});
    }
    r.pooled_auc = j.at("pooled_auc").get<double>();
    r.balanced_accuracy = j.at("balanced_accuracy").get<double>();
    r.n = j.at("n").get<std::size_t>();
    r.config_hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
    r.seed = j.at("seed").get<std::uint64_t>();
    r.timestamp = j.at("timestamp").get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("report: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw FormatError("report: config_hash is not hexadecimal");
  }
}

std::string report_to_csv(const EvalReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "protocol,site,auc,n\n";
  for (const auto& s : r.per_site) os << r.protocol << ',' << s.site_id << ',' << s.auc << ',' << s.n << '\n';
  os << r.protocol << ",pooled," << r.pooled_auc << ',' << r.n << '\n';
  return os.str();
}

// ---- protocols ----------------------------------------------------------------------

EvalReport finetune_few_shot(const CheckpointRing& ring, const SiteTable& table, const MetaConfig& config,
                             const FewShotOptions& options) {
  if (ring.empty()) throw PreconditionError("few-shot evaluation: checkpoint ring is empty");
  const auto ids = sorted_role(table, Role::meta_test);
  if (ids.empty()) throw PreconditionError("few-shot evaluation: meta_test role is empty");
  if (config.k_support == 0 || config.t_target == 0) {
    throw PreconditionError("few-shot evaluation: k_support and t_target must be positive");
  }
  auto rng = stream(options.seed, kFewShotStream);
  const auto splits = draw_splits(table, ids, config.k_support, config.t_target, rng);

  // One adapted model per (checkpoint, site).
  const std::size_t models = ring.size(), sites = splits.size();
  std::vector<SitePredictions> held_out(models * sites), support(models * sites);
  parallel_for(models * sites, options.threads, [&](std::size_t job) {
    const Checkpoint& ck = ring[job / sites];
    const FineTuneSplit& split = splits[job % sites];
    const ParamSet adapted = adapt_for_eval(ck.spec, ck.params, split.support, ck.lr_table, ck.lr_table.steps());
    support[job] = {split.site_id, predict(ck.spec, adapted, split.support), int_labels(split.support)};
    held_out[job] = score_chunks(ck.spec, adapted, split);
  });

  std::size_t chosen = 0;
  double chosen_score = -1.0;
  for (std::size_t m = 0; m < models; ++m) {
    std::vector<double> s;
    std::vector<int> y;
    for (std::size_t i = 0; i < sites; ++i) {
      const auto& p = support[m * sites + i];
      s.insert(s.end(), p.scores.begin(), p.scores.end());
      y.insert(y.end(), p.labels.begin(), p.labels.end());
    }
    const double score = roc_auc(s, y);
    if (score > chosen_score) chosen = m, chosen_score = score;
  }
  EvalReport r = summarize("few_shot", {held_out.begin() + static_cast<std::ptrdiff_t>(chosen * sites),
                                        held_out.begin() + static_cast<std::ptrdiff_t>((chosen + 1) * sites)});
  r.config_hash = config_hash(ring[chosen].spec, config);
  r.seed = options.seed;
  return r;
}

EvalReport zero_shot_eval(const Checkpoint& checkpoint, const SiteTable& table) {
  const std::uint64_t before = param_hash(checkpoint.params);
  EvalReport r = zero_shot_report(checkpoint.spec, checkpoint.params, table);
  if (param_hash(checkpoint.params) != before) throw Error("zero-shot evaluation modified the parameters");
  r.config_hash = config_hash(checkpoint.spec, checkpoint.config);
  r.seed = checkpoint.config.seed;
  return r;
}

BaselineResult transfer_baseline(const SiteTable& table, const ModelSpec& spec, const MetaConfig& config,
                                 const BaselineConfig& baseline) {
  if (config.k_support == 0) throw PreconditionError("transfer: k_support must be positive");
  validate(config);
  validate(spec);
  if (baseline.batch_size == 0) throw PreconditionError("transfer: batch_size must be positive");
  const Batch train = pool_role(table, Role::meta_train);
  const Batch val = pool_role(table, Role::meta_val);
  auto rng = stream(config.seed, kPretrainStream);
  std::vector<EpochLog> log;
  const ParamSet pretrained =
      supervised_fit(spec, init_params(spec, config.seed), train, &val, config.max_epochs, baseline.scratch_lr,
                     config.weight_decay, baseline.batch_size, config.early_stop_patience, rng, &log);
  BaselineResult out = run_stage_two(table, spec, config, baseline, pretrained, baseline.finetune_lr, "transfer");
  out.pretrain_log = std::move(log);
  out.zero_shot = zero_shot_report(spec, pretrained, table);
  out.zero_shot.protocol = "transfer_zero_shot";
  out.zero_shot.config_hash = out.few_shot.config_hash;
  out.zero_shot.seed = config.seed;
  return out;
}

BaselineResult scratch_baseline(const SiteTable& table, const ModelSpec& spec, const MetaConfig& config,
                                const BaselineConfig& baseline) {
  if (config.k_support == 0) throw PreconditionError("scratch: k_support must be positive");
  validate(config);
  validate(spec);
  return run_stage_two(table, spec, config, baseline, init_params(spec, config.seed), baseline.scratch_lr,
                       "scratch");
}

// ---- random search ------------------------------------------------------------------

SearchResult random_search(const SearchSpace& space, const SiteTable& table, const ModelSpec& spec,
                           const MetaConfig& base, std::size_t threads) {
  if (space.n_trials == 0) throw PreconditionError("random search: n_trials must be at least 1");
  if (space.n_sites.empty() || space.k_support.empty() || space.t_target.empty()) {
    throw PreconditionError("random search: every search set needs at least one value");
  }
  validate(base);
  auto rng = stream(space.seed, kSearchStream);
  auto pick = [&rng](const std::vector<std::size_t>& set) {
    return set[std::uniform_int_distribution<std::size_t>(0, set.size() - 1)(rng)];
  };
  std::vector<TrialRecord> trials(space.n_trials);
  for (std::size_t i = 0; i < space.n_trials; ++i) {
    trials[i].index = i;
    trials[i].n_sites = pick(space.n_sites);
    trials[i].k_support = pick(space.k_support);
    trials[i].t_target = pick(space.t_target);
  }
  MetaConfig trial_base = base;
  trial_base.max_epochs = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(space.budget_fraction * static_cast<double>(base.max_epochs))));
  trial_base.early_stop_patience = std::min(base.early_stop_patience, trial_base.max_epochs);

  auto config_for = [&](const TrialRecord& t) {
    MetaConfig c = trial_base;
    c.n_sites_per_episode = t.n_sites;
    c.k_support = t.k_support;
    c.t_target = t.t_target;
    return c;
  };
  parallel_for(trials.size(), threads, [&](std::size_t i) {
    auto& t = trials[i];
    try {
      const TrainResult r = meta_train(table, spec, config_for(t));
      const double score = r.log.empty() ? std::numeric_limits<double>::quiet_NaN() : r.log.back().val_auc;
      if (!std::isfinite(score)) throw NonFiniteError("training diverged");
      t.score = score;
      t.ok = true;
    } catch (const std::exception& e) {
      t.ok = false;
      t.error = e.what();
    }
  });

  SearchResult out;
  out.trials = trials;
  bool found = false;
  for (const auto& t : trials) {
    if (t.ok && (!found || t.score > out.trials[out.best_index].score)) {
      out.best_index = t.index;
      found = true;
    }
  }
  if (!found) throw SearchExhaustedError("random search: all " + std::to_string(trials.size()) + " trials failed");
  out.best = base;
  out.best.n_sites_per_episode = trials[out.best_index].n_sites;
  out.best.k_support = trials[out.best_index].k_support;
  out.best.t_target = trials[out.best_index].t_target;
  return out;
}

std::string format_trials_csv(const std::vector<TrialRecord>& trials) {
  std::ostringstream os;
  os.precision(17);
  os << "index,n_sites,k_support,t_target,ok,score,error\n";
  for (const auto& t : trials) {
    std::string err = t.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    os << t.index << ',' << t.n_sites << ',' << t.k_support << ',' << t.t_target << ',' << (t.ok ? 1 : 0) << ','
       << (t.ok ? t.score : 0.0) << ',' << err << '\n';
  }
  return os.str();
}

}  // namespace saml
