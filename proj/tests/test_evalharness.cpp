// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <set>
#include <utility>
#include <vector>

#include "doctest.h"
#include "saml/errors.hpp"
#include "saml/evalharness.hpp"
#include "saml/metrics.hpp"

using namespace saml;

namespace {

// 10 sites: 6 train (plus their val draws), 3 test, 1 zero-shot.
SiteTable small_table(std::uint64_t seed) {
  SynthOptions o;
  o.n_sites = 10;
  o.split = {6, 3, 1};
  o.n_per_site = 40;
  o.seed = seed;
  return synth_generate(o);
}

MetaConfig quick_config(std::uint64_t seed) {
  MetaConfig c;
  c.seed = seed;
  c.k_support = 10;
  c.t_target = 5;
  c.inner_steps = 2;
  c.max_epochs = 3;
  c.early_stop_patience = 3;
  c.episodes_per_epoch = 5;
  c.val_episodes = 4;
  return c;
}

ModelSpec spec_for(const SiteTable& table) { return ModelSpec::mlp({table.feature_shape[0], 8, 1}); }

Checkpoint untrained(const ModelSpec& spec, const MetaConfig& c, std::uint64_t seed, double val_score) {
  Checkpoint ck;
  ck.spec = spec;
  ck.params = init_params(spec, seed);
  ck.lr_table = LearnableLRTable(ck.params, c.inner_steps, c.inner_lr_init);
  ck.config = c;
  ck.val_score = val_score;
  return ck;
}

void same_numbers(const EvalReport& a, const EvalReport& b) {
  CHECK(a.per_site == b.per_site);
  CHECK(a.pooled_auc == b.pooled_auc);
  CHECK(a.balanced_accuracy == b.balanced_accuracy);
  CHECK(a.n == b.n);
  CHECK(a.scores == b.scores);
}

std::vector<std::pair<double, int>> sorted_pairs(const std::vector<double>& s, const std::vector<int>& y,
                                                 std::size_t lo, std::size_t hi) {
  std::vector<std::pair<double, int>> out;
  for (std::size_t i = lo; i < hi; ++i) out.emplace_back(s[i], y[i]);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("few-shot report covers every meta-test site once") {
  SynthOptions o;  // default 38-site layout, 7 meta-test sites
  const SiteTable table = synth_generate(o);
  const auto spec = spec_for(table);
  MetaConfig c = quick_config(0);
  c.k_support = 20;
  c.t_target = 10;
  CheckpointRing ring;
  ring.offer(untrained(spec, c, 1, 0.5));
  const EvalReport r = finetune_few_shot(ring, table, c);
  REQUIRE(r.per_site.size() == 7);
  std::size_t total = 0, expected = 0;
  for (std::size_t i = 0; i < r.per_site.size(); ++i) {
    const auto& s = r.per_site[i];
    if (i > 0) CHECK(s.site_id > r.per_site[i - 1].site_id);
    // Everything outside the support is scored exactly once.
    CHECK(s.n == table.site(s.site_id).size() - c.k_support);
    total += s.n;
  }
  for (int id : table.role(Role::meta_test)) expected += table.site(id).size() - c.k_support;
  CHECK(total == expected);
  CHECK(r.n == total);
  CHECK(r.scores.size() == r.n);
  CHECK(r.pooled_auc == roc_auc(r.scores, r.labels));
  CHECK(r.protocol == "few_shot");
}

TEST_CASE("few-shot selection picks one of the retained models as evaluated alone") {
  const SiteTable table = small_table(2);
  const auto spec = spec_for(table);
  const MetaConfig c = quick_config(2);
  const Checkpoint a = untrained(spec, c, 10, 0.9), b = untrained(spec, c, 11, 0.8);
  CheckpointRing only_a, only_b, both;
  only_a.offer(a);
  only_b.offer(b);
  both.offer(a);
  both.offer(b);
  const FewShotOptions opts{7, 1};
  const EvalReport ra = finetune_few_shot(only_a, table, c, opts);
  const EvalReport rb = finetune_few_shot(only_b, table, c, opts);
  const EvalReport rboth = finetune_few_shot(both, table, c, opts);
  CHECK((rboth.scores == ra.scores || rboth.scores == rb.scores));
  // A single retained model is reported as is, and repeat runs agree.
  same_numbers(ra, finetune_few_shot(only_a, table, c, opts));
}

TEST_CASE("few-shot evaluation ignores the worker count") {
  const SiteTable table = small_table(3);
  const auto spec = spec_for(table);
  const MetaConfig c = quick_config(3);
  CheckpointRing ring;
  for (std::uint64_t s = 0; s < 3; ++s) ring.offer(untrained(spec, c, 20 + s, 0.5 + 0.1 * static_cast<double>(s)));
  same_numbers(finetune_few_shot(ring, table, c, {5, 1}), finetune_few_shot(ring, table, c, {5, 3}));
}

TEST_CASE("few-shot errors") {
  const SiteTable table = small_table(4);
  const auto spec = spec_for(table);
  MetaConfig c = quick_config(4);
  CHECK_THROWS_AS(finetune_few_shot(CheckpointRing{}, table, c), PreconditionError);
  CheckpointRing ring;
  ring.offer(untrained(spec, c, 1, 0.5));
  c.k_support = 40;  // sites hold 40 examples
  CHECK_THROWS_AS(finetune_few_shot(ring, table, c), EpisodeError);
}

TEST_CASE("meta-trained ring beats a random-init ring on few-shot AUC") {
  // Paired seeds, default synthetic layout and training budget.
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SynthOptions o;
    o.seed = seed;
    const SiteTable table = synth_generate(o);
    const auto spec = ModelSpec::mlp({o.feature_dim, 32, 1});
    MetaConfig c;
    c.seed = seed;
    const TrainResult trained = meta_train(table, spec, c);
    CheckpointRing random_ring;
    random_ring.offer(untrained(spec, c, seed, 0.0));
    const double meta = finetune_few_shot(trained.ring, table, c, {seed, 1}).pooled_auc;
    const double base = finetune_few_shot(random_ring, table, c, {seed, 1}).pooled_auc;
    MESSAGE("seed " << seed << ": meta " << meta << " random " << base);
    wins += meta > base;
  }
  CHECK(wins == 10);
}

TEST_CASE("zero-shot leaves the parameters untouched") {
  const SiteTable table = small_table(5);
  const auto spec = spec_for(table);
  const Checkpoint ck = untrained(spec, quick_config(5), 3, 0.0);
  const auto before = param_hash(ck.params);
  const EvalReport r = zero_shot_eval(ck, table);
  CHECK(param_hash(ck.params) == before);
  REQUIRE(r.per_site.size() == 1);
  CHECK(r.per_site[0].site_id == table.role(Role::zero_shot)[0]);
  CHECK(r.n == table.site(r.per_site[0].site_id).size());
  CHECK(r.protocol == "zero_shot");
  CHECK(r.config_hash == config_hash(spec, ck.config));
}

TEST_CASE("random-init zero-shot AUC centres on chance") {
  SynthOptions o;
  const SiteTable table = synth_generate(o);
  const auto spec = ModelSpec::mlp({o.feature_dim, 32, 1});
  const MetaConfig c;
  double sum = 0.0;
  std::vector<double> aucs;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const double auc = zero_shot_eval(untrained(spec, c, 500 + seed, 0.0), table).pooled_auc;
    aucs.push_back(auc);
    sum += auc;
  }
  const double mean = sum / 20.0;
  CHECK(mean >= 0.3);
  CHECK(mean <= 0.7);
  // A random direction is as likely to anti-align with the class axis as to
  // align with it.
  const auto above = std::count_if(aucs.begin(), aucs.end(), [](double a) { return a > 0.5; });
  CHECK(above >= 3);
  CHECK(above <= 17);
}

TEST_CASE("zero-shot preconditions") {
  SiteTable table = small_table(6);
  const auto spec = spec_for(table);
  const Checkpoint ck = untrained(spec, quick_config(6), 1, 0.0);

  SiteTable two = table;
  auto& zs = two.roles[static_cast<std::size_t>(Role::zero_shot)];
  auto& test = two.roles[static_cast<std::size_t>(Role::meta_test)];
  zs.push_back(test.back());
  test.pop_back();
  CHECK_THROWS_AS(zero_shot_eval(ck, two), PreconditionError);

  SiteTable single_class = table;
  for (auto& s : single_class.sites)
    if (s.site_id == table.role(Role::zero_shot)[0]) std::fill(s.labels.begin(), s.labels.end(), 1);
  CHECK_THROWS_AS(zero_shot_eval(ck, single_class), DegenerateLabelsError);
}

TEST_CASE("transfer baseline reports three fine-tune sites and a zero-shot score") {
  const SiteTable table = small_table(7);
  const auto spec = spec_for(table);
  const MetaConfig c = quick_config(7);
  const BaselineResult r = transfer_baseline(table, spec, c);
  REQUIRE(r.few_shot.per_site.size() == 3);
  const auto& test_ids = table.role(Role::meta_test);
  for (const auto& s : r.few_shot.per_site) {
    CHECK(std::find(test_ids.begin(), test_ids.end(), s.site_id) != test_ids.end());
    CHECK(s.n == table.site(s.site_id).size() - c.k_support);
  }
  CHECK(r.few_shot.protocol == "transfer");
  CHECK(r.zero_shot.protocol == "transfer_zero_shot");
  CHECK(!r.pretrain_log.empty());
  CHECK(r.pretrain_log.size() <= c.max_epochs);

  Checkpoint pretrained = untrained(spec, c, 0, 0.0);
  pretrained.params = r.start;
  same_numbers(r.zero_shot, zero_shot_eval(pretrained, table));
}

TEST_CASE("transfer stage two with no fine-tuning scores the pretrained model") {
  const SiteTable table = small_table(8);
  const auto spec = spec_for(table);
  const MetaConfig c = quick_config(8);
  BaselineConfig frozen;
  frozen.finetune_epochs = 0;
  const BaselineResult r = transfer_baseline(table, spec, c, frozen);
  // Each site's reported (score, label) pairs are the pretrained model's
  // predictions on that site minus the k support examples.
  std::size_t lo = 0;
  for (const auto& s : r.few_shot.per_site) {
    const auto& site = table.site(s.site_id);
    std::vector<std::size_t> all(site.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const Tensor logits = forward(spec, r.start, make_batch(site, all).features);
    const std::vector<double> full(logits.data().begin(), logits.data().end());
    const auto whole = sorted_pairs(full, site.labels, 0, full.size());
    const auto reported = sorted_pairs(r.few_shot.scores, r.few_shot.labels, lo, lo + s.n);
    CHECK(std::includes(whole.begin(), whole.end(), reported.begin(), reported.end()));
    CHECK(reported.size() + c.k_support == whole.size());
    lo += s.n;
  }
  // One fine-tuning epoch moves the scores.
  BaselineConfig one = frozen;
  one.finetune_epochs = 1;
  CHECK(transfer_baseline(table, spec, c, one).few_shot.scores != r.few_shot.scores);
}

TEST_CASE("scratch baseline") {
  const SiteTable table = small_table(9);
  const auto spec = spec_for(table);
  MetaConfig c = quick_config(9);
  const BaselineResult a = scratch_baseline(table, spec, c);
  same_numbers(a.few_shot, scratch_baseline(table, spec, c).few_shot);
  CHECK(a.few_shot.per_site.size() == 3);
  CHECK(a.few_shot.protocol == "scratch");
  CHECK(a.start.identical(init_params(spec, c.seed)));
  CHECK(a.pretrain_log.empty());

  c.k_support = 0;
  CHECK_THROWS_AS(scratch_baseline(table, spec, c), PreconditionError);
  CHECK_THROWS_AS(transfer_baseline(table, spec, c), PreconditionError);
  c = quick_config(9);
  BaselineConfig too_many;
  too_many.finetune_sites = 4;
  CHECK_THROWS_AS(scratch_baseline(table, spec, c, too_many), PreconditionError);
}

TEST_CASE("random search samples from the given sets") {
  const SiteTable table = small_table(10);
  const auto spec = spec_for(table);
  MetaConfig base = quick_config(10);
  base.max_epochs = 5;
  base.early_stop_patience = 5;
  SearchSpace space;
  space.n_trials = 12;
  space.seed = 3;
  // Sites hold 40 examples, so k + t always fits.
  const SearchResult r = random_search(space, table, spec, base);
  REQUIRE(r.trials.size() == 12);
  const std::set<std::size_t> ns(space.n_sites.begin(), space.n_sites.end());
  const std::set<std::size_t> ks(space.k_support.begin(), space.k_support.end());
  const std::set<std::size_t> ts(space.t_target.begin(), space.t_target.end());
  for (std::size_t i = 0; i < r.trials.size(); ++i) {
    const auto& t = r.trials[i];
    CHECK(t.index == i);
    CHECK(ns.count(t.n_sites) == 1);
    CHECK(ks.count(t.k_support) == 1);
    CHECK(ts.count(t.t_target) == 1);
    CHECK(t.ok);
    CHECK(t.score <= r.trials[r.best_index].score);
  }
  CHECK(r.best.k_support == r.trials[r.best_index].k_support);
  CHECK(r.best.n_sites_per_episode == r.trials[r.best_index].n_sites);
  CHECK(r.best.t_target == r.trials[r.best_index].t_target);
  CHECK(r.best.max_epochs == base.max_epochs);

  // Same seed, same trials, whatever the worker count.
  const SearchResult again = random_search(space, table, spec, base, 2);
  for (std::size_t i = 0; i < r.trials.size(); ++i) {
    CHECK(again.trials[i].score == r.trials[i].score);
    CHECK(again.trials[i].k_support == r.trials[i].k_support);
  }
}

TEST_CASE("random search edge cases") {
  const SiteTable table = small_table(11);
  const auto spec = spec_for(table);
  const MetaConfig base = quick_config(11);

  SearchSpace one;
  one.n_trials = 1;
  const SearchResult single = random_search(one, table, spec, base);
  CHECK(single.best_index == 0);
  CHECK(single.best.k_support == single.trials[0].k_support);

  // Identical configurations train identically; the lowest index wins the tie.
  SearchSpace fixed{{1}, {10}, {5}, 3, 0, 0.2};
  const SearchResult tie = random_search(fixed, table, spec, base);
  CHECK(tie.trials[0].score == tie.trials[2].score);
  CHECK(tie.best_index == 0);

  // k + t beyond the 40 examples per site: a failing trial is logged, not fatal.
  SearchSpace mixed{{1}, {10, 45}, {5}, 6, 1, 0.2};
  const SearchResult m = random_search(mixed, table, spec, base);
  bool saw_failure = false;
  for (const auto& t : m.trials) {
    CHECK(t.ok == (t.k_support == 10));
    if (!t.ok) {
      saw_failure = true;
      CHECK(!t.error.empty());
    }
  }
  CHECK(saw_failure);
  CHECK(m.trials[m.best_index].ok);

  SearchSpace doomed{{1}, {45}, {5}, 3, 0, 0.2};
  CHECK_THROWS_AS(random_search(doomed, table, spec, base), SearchExhaustedError);
  SearchSpace none = one;
  none.n_trials = 0;
  CHECK_THROWS_AS(random_search(none, table, spec, base), PreconditionError);

  const std::string csv = format_trials_csv(m.trials);
  CHECK(csv.rfind("index,n_sites,k_support,t_target,ok,score,error\n", 0) == 0);
  CHECK(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) == m.trials.size() + 1);
}

TEST_CASE("report serialization") {
  EvalReport r;
  r.protocol = "few_shot";
  r.per_site = {{31, 0.75, 40}, {35, 0.5, 38}};
  r.pooled_auc = 0.6123456789012345;
  r.balanced_accuracy = 0.58;
  r.n = 78;
  r.config_hash = 0xfedcba9876543210ULL;
  r.seed = 42;
  r.timestamp = "2026-01-01T00:00:00Z";
  const EvalReport back = report_from_json(report_to_json(r));
  CHECK(back.protocol == r.protocol);
  CHECK(back.per_site == r.per_site);
  CHECK(back.pooled_auc == r.pooled_auc);
  CHECK(back.balanced_accuracy == r.balanced_accuracy);
  CHECK(back.n == r.n);
  CHECK(back.config_hash == r.config_hash);
  CHECK(back.seed == r.seed);
  CHECK(back.timestamp == r.timestamp);
  CHECK(report_to_json(back) == report_to_json(r));
  CHECK(report_to_json(r).find("\"config_hash\": \"fedcba9876543210\"") != std::string::npos);

  CHECK(report_to_csv(r) ==
        "protocol,site,auc,n\n"
        "few_shot,31,0.75,40\n"
        "few_shot,35,0.5,38\n"
        "few_shot,pooled,0.61234567890123448,78\n");

  CHECK_THROWS_AS(report_from_json("{"), FormatError);
  CHECK_THROWS_AS(report_from_json("{\"protocol\": \"x\"}"), FormatError);
}

TEST_CASE("config hash tracks every field") {
  const auto spec = ModelSpec::mlp({16, 32, 1});
  const MetaConfig c;
  CHECK(config_hash(spec, c) == config_hash(spec, c));
  MetaConfig k = c;
  k.k_support = 18;
  CHECK(config_hash(spec, k) != config_hash(spec, c));
  MetaConfig s = c;
  s.seed = 1;
  CHECK(config_hash(spec, s) != config_hash(spec, c));
  CHECK(config_hash(ModelSpec::mlp({16, 31, 1}), c) != config_hash(spec, c));
}
