// SPDX-License-Identifier: Apache-2.0
#include "saml/cli.hpp"

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "saml/errors.hpp"
#include "saml/evalharness.hpp"

namespace saml::cli {

namespace {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}
std::string fmt(std::size_t v) { return std::to_string(v); }

std::string join(const std::vector<std::size_t>& values, char sep) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) s += (i ? std::string(1, sep) : "") + std::to_string(values[i]);
  return s;
}

struct Key {
  std::string section;
  std::string name;
  std::string value;
  std::string help;
};

std::vector<Key> default_keys() {
  const MetaConfig m;
  const SynthOptions s;
  const BaselineConfig b;
  const SearchSpace q;
  return {
      {"cli", "command", "", "command that wrote this file"},
      {"cli", "data", "", "input dataset file"},
      {"cli", "out", "", "output directory"},
      {"cli", "checkpoints", "", "directory holding rank<i>.ckpt files"},
      {"cli", "kind", "transfer", "baseline: transfer or scratch"},
      {"cli", "seed", "0", "seed for every random stream"},
      {"cli", "threads", "1", "worker cap; 1 runs serially"},
      {"episodes", "sites", fmt(s.n_sites), "number of synthetic sites"},
      {"episodes", "split", join(s.split, '/'), "sites per role, train/test/zero-shot or train/val/test/zero-shot"},
      {"episodes", "n_per_site", fmt(s.n_per_site), "examples per site"},
      {"episodes", "heterogeneity", fmt(s.heterogeneity), "scale of per-site shifts"},
      {"episodes", "feature_dim", fmt(s.feature_dim), "feature vector length"},
      {"episodes", "class_separation", fmt(s.class_separation), "distance between class means"},
      {"episodes", "offset_scale", fmt(s.offset_scale), "site offset scale relative to heterogeneity"},
      {"episodes", "volume_extent", fmt(s.volume_extent), "emit cubic volumes of this extent (0: vectors)"},
      {"backbone", "arch", "auto", "auto, mlp or vgg_tiny"},
      {"backbone", "hidden", "32", "mlp hidden widths, comma separated"},
      {"backbone", "conv_channels", "4,8", "vgg_tiny conv channels, comma separated"},
      {"backbone", "dense_width", "32", "vgg_tiny dense width"},
      {"metalearn", "n_sites_per_episode", fmt(m.n_sites_per_episode), "sites per episode"},
      {"metalearn", "k_support", fmt(m.k_support), "support examples per site"},
      {"metalearn", "t_target", fmt(m.t_target), "target examples per site"},
      {"metalearn", "inner_steps", fmt(m.inner_steps), "inner-loop steps"},
      {"metalearn", "inner_lr_init", fmt(m.inner_lr_init), "initial inner learning rate"},
      {"metalearn", "meta_lr", fmt(m.meta_lr), "outer learning rate"},
      {"metalearn", "weight_decay", fmt(m.weight_decay), "decoupled weight decay"},
      {"metalearn", "order", to_string(m.order), "first or second"},
      {"metalearn", "msl_anneal_epochs", fmt(m.msl_anneal_epochs), "epochs to anneal the multi-step loss"},
      {"metalearn", "max_epochs", fmt(m.max_epochs), "training epochs"},
      {"metalearn", "early_stop_patience", fmt(m.early_stop_patience), "epochs without improvement"},
      {"metalearn", "episodes_per_epoch", fmt(m.episodes_per_epoch), "training episodes per epoch"},
      {"metalearn", "val_episodes", fmt(m.val_episodes), "validation episodes per epoch"},
      {"metalearn", "meta_batch_size", fmt(m.meta_batch_size), "episodes per outer update"},
      {"metalearn", "lslr_lr", fmt(m.lslr_lr), "learning rate of the inner rates"},
      {"evalharness", "batch_size", fmt(b.batch_size), "baseline minibatch size"},
      {"evalharness", "scratch_lr", fmt(b.scratch_lr), "baseline rate from random weights"},
      {"evalharness", "finetune_lr", fmt(b.finetune_lr), "baseline rate when fine-tuning"},
      {"evalharness", "finetune_epochs", fmt(b.finetune_epochs), "baseline fine-tuning epochs"},
      {"evalharness", "finetune_sites", fmt(b.finetune_sites), "meta-test sites the baselines fine-tune on"},
      {"evalharness", "n_trials", fmt(q.n_trials), "random search trials"},
      {"evalharness", "budget_fraction", fmt(q.budget_fraction), "share of max_epochs per trial"},
      {"evalharness", "search_n_sites", join(q.n_sites, ','), "candidate sites per episode"},
      {"evalharness", "search_k_support", join(q.k_support, ','), "candidate support sizes"},
      {"evalharness", "search_t_target", join(q.t_target, ','), "candidate target sizes"},
  };
}

// Resolved key/value settings. Key names are unique across sections, so a
// flag maps to exactly one entry.
class Settings {
 public:
  Settings() : keys_(default_keys()) {
    for (const auto& k : keys_) {
      tree_.put(pt::ptree::path_type(k.section + "." + k.name, '.'), k.value);
      section_of_[k.name] = k.section;
    }
  }

  const std::vector<Key>& keys() const { return keys_; }

  void merge_file(const std::string& path) {
    pt::ptree file;
    try {
      pt::read_ini(path, file);
    } catch (const pt::ini_parser_error& e) {
      throw UsageError("config " + path + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
    }
    for (const auto& [section, body] : file) {
      if (body.empty()) throw UsageError("config " + path + ": key '" + section + "' is outside a section");
      for (const auto& [name, value] : body) {
        const auto it = section_of_.find(name);
        if (it == section_of_.end() || it->second != section) {
          throw UsageError("config " + path + ": unknown key [" + section + "] " + name);
        }
        set(name, value.data());
      }
    }
  }

  void set(const std::string& name, const std::string& value) {
    tree_.put(path(name), value);
    explicit_.insert(name);
  }
  bool is_explicit(const std::string& name) const { return explicit_.count(name) > 0; }
  std::string str(const std::string& name) const { return tree_.get<std::string>(path(name)); }

  std::uint64_t u64(const std::string& name) const {
    const std::string s = str(name);
    std::uint64_t v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) {
      throw UsageError(name + ": expected a non-negative integer, got '" + s + "'");
    }
    return v;
  }
  std::size_t count(const std::string& name) const { return static_cast<std::size_t>(u64(name)); }

  double real(const std::string& name) const {
    const std::string s = str(name);
    double v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v)) {
      throw UsageError(name + ": expected a finite number, got '" + s + "'");
    }
    return v;
  }

  std::vector<std::size_t> list(const std::string& name) const {
    std::vector<std::size_t> out;
    std::string item;
    std::istringstream is(str(name));
    while (std::getline(is, item, ',')) {
      std::size_t v = 0;
      const auto r = std::from_chars(item.data(), item.data() + item.size(), v);
      if (item.empty() || r.ec != std::errc() || r.ptr != item.data() + item.size()) {
        throw UsageError(name + ": expected comma-separated integers, got '" + str(name) + "'");
      }
      out.push_back(v);
    }
    return out;
  }

  std::string required(const std::string& name) const {
    std::string v = str(name);
    if (v.empty()) throw UsageError("--" + name + " is required");
    return v;
  }

  std::string to_ini() const {
    std::ostringstream os;
    pt::write_ini(os, tree_);
    return os.str();
  }

 private:
  pt::ptree::path_type path(const std::string& name) const {
    return pt::ptree::path_type(section_of_.at(name) + "." + name, '.');
  }

  std::vector<Key> keys_;
  std::map<std::string, std::string> section_of_;
  std::set<std::string> explicit_;
  pt::ptree tree_;
};

// ---- files ---------------------------------------------------------------------------

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  os << text;
  if (!os) throw Error("cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot read " + path.string());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

std::string existing_file(const Settings& s, const std::string& name) {
  const std::string path = s.required(name);
  if (!fs::is_regular_file(path)) throw UsageError("--" + name + ": no such file " + path);
  return path;
}

fs::path output_dir(const Settings& s) {
  const fs::path out = s.required("out");
  fs::create_directories(out);
  return out;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_report(const fs::path& dir, const std::string& stem, EvalReport report) {
  report.timestamp = utc_now();
  write_text(dir / (stem + ".json"), report_to_json(report));
  write_text(dir / (stem + ".csv"), report_to_csv(report));
}

fs::path checkpoint_path(const fs::path& dir, std::size_t rank) {
  return dir / ("rank" + std::to_string(rank) + ".ckpt");
}

CheckpointRing load_ring(const Settings& s) {
  const fs::path dir = s.required("checkpoints");
  if (!fs::is_regular_file(checkpoint_path(dir, 0))) {
    throw UsageError("--checkpoints: " + checkpoint_path(dir, 0).string() + " not found");
  }
  CheckpointRing ring;
  for (std::size_t i = 0; i < CheckpointRing::kCapacity && fs::is_regular_file(checkpoint_path(dir, i)); ++i) {
    ring.offer(load_checkpoint(checkpoint_path(dir, i).string()));
  }
  return ring;
}

// ---- typed views -------------------------------------------------------------------

template <typename F>
auto as_usage(F&& f) {
  try {
    return f();
  } catch (const SpecError& e) {
    throw UsageError(e.what());
  }
}

std::size_t threads(const Settings& s) {
  const std::size_t n = s.count("threads");
  if (n == 0) throw UsageError("threads: must be at least 1");
  return n;
}

MetaConfig meta_config(const Settings& s) {
  MetaConfig c;
  c.n_sites_per_episode = s.count("n_sites_per_episode");
  c.k_support = s.count("k_support");
  c.t_target = s.count("t_target");
  c.inner_steps = s.count("inner_steps");
  c.inner_lr_init = s.real("inner_lr_init");
  c.meta_lr = s.real("meta_lr");
  c.weight_decay = s.real("weight_decay");
  c.order = as_usage([&] { return parse_grad_order(s.str("order")); });
  c.msl_anneal_epochs = s.count("msl_anneal_epochs");
  c.max_epochs = s.count("max_epochs");
  c.early_stop_patience = s.count("early_stop_patience");
  c.episodes_per_epoch = s.count("episodes_per_epoch");
  c.val_episodes = s.count("val_episodes");
  c.seed = s.u64("seed");
  c.meta_batch_size = s.count("meta_batch_size");
  c.lslr_lr = s.real("lslr_lr");
  as_usage([&] {
    validate(c);
    return 0;
  });
  return c;
}

SynthOptions synth_options(const Settings& s) {
  SynthOptions o;
  o.n_sites = s.count("sites");
  o.split = as_usage([&] { return parse_split(s.str("split")); });
  o.n_per_site = s.count("n_per_site");
  o.heterogeneity = s.real("heterogeneity");
  o.feature_dim = s.count("feature_dim");
  o.class_separation = s.real("class_separation");
  o.offset_scale = s.real("offset_scale");
  o.volume_extent = s.count("volume_extent");
  o.seed = s.u64("seed");
  return o;
}

BaselineConfig baseline_config(const Settings& s) {
  BaselineConfig b;
  b.batch_size = s.count("batch_size");
  b.scratch_lr = s.real("scratch_lr");
  b.finetune_lr = s.real("finetune_lr");
  b.finetune_epochs = s.count("finetune_epochs");
  b.finetune_sites = s.count("finetune_sites");
  if (b.batch_size == 0) throw UsageError("batch_size: must be at least 1");
  if (!(b.scratch_lr > 0) || !(b.finetune_lr > 0)) throw UsageError("baseline learning rates must be positive");
  return b;
}

SearchSpace search_space(const Settings& s) {
  SearchSpace q;
  q.n_sites = s.list("search_n_sites");
  q.k_support = s.list("search_k_support");
  q.t_target = s.list("search_t_target");
  q.n_trials = s.count("n_trials");
  q.budget_fraction = s.real("budget_fraction");
  q.seed = s.u64("seed");
  if (q.n_trials == 0) throw UsageError("n_trials: must be at least 1");
  if (q.n_sites.empty() || q.k_support.empty() || q.t_target.empty()) {
    throw UsageError("search sets must each hold at least one value");
  }
  if (!(q.budget_fraction > 0) || q.budget_fraction > 1) throw UsageError("budget_fraction: must be in (0, 1]");
  return q;
}

// Checked before any data is read.
void check_arch(const Settings& s) {
  const std::string arch = s.str("arch");
  if (arch != "auto" && arch != "mlp" && arch != "vgg_tiny") {
    throw UsageError("arch: expected auto, mlp or vgg_tiny, got '" + arch + "'");
  }
  s.list("hidden");
  s.list("conv_channels");
  s.count("dense_width");
}

ModelSpec model_for(const Settings& s, const SiteTable& table) {
  std::string arch = s.str("arch");
  if (arch == "auto") arch = table.feature_shape.size() == 1 ? "mlp" : "vgg_tiny";
  ModelSpec spec;
  if (arch == "mlp") {
    if (table.feature_shape.size() != 1) throw UsageError("arch mlp needs vector features");
    std::vector<std::size_t> widths{table.feature_shape[0]};
    for (auto w : s.list("hidden")) widths.push_back(w);
    widths.push_back(1);
    spec = ModelSpec::mlp(widths);
  } else {
    if (table.feature_shape.size() != 3) throw UsageError("arch vgg_tiny needs {C,H,W} features; run preprocess");
    spec = ModelSpec::vgg_tiny(table.feature_shape, s.list("conv_channels"), s.count("dense_width"));
  }
  as_usage([&] {
    validate(spec);
    return 0;
  });
  return spec;
}

std::string role_summary(const SiteTable& table) {
  std::string s;
  for (Role r : kAllRoles) s += (s.empty() ? "" : " ") + to_string(r) + "=" + std::to_string(table.role(r).size());
  return s;
}

// ---- commands --------------------------------------------------------------------------

void cmd_gen_data(const Settings& s, std::ostream& out) {
  const SynthOptions o = synth_options(s);
  const fs::path dir = output_dir(s);
  write_text(dir / ("resolved_" + s.str("command") + ".ini"), s.to_ini());
  const SiteTable table = as_usage([&] { return synth_generate(o); });
  save_dataset((dir / "dataset.bin").string(), table);
  out << "wrote " << (dir / "dataset.bin").string() << ": " << role_summary(table) << "\n";
}

void cmd_preprocess(const Settings& s, std::ostream& out) {
  const std::string data = existing_file(s, "data");
  const fs::path dir = output_dir(s);
  write_text(dir / ("resolved_" + s.str("command") + ".ini"), s.to_ini());
  const SiteTable table = preprocess_volumes(load_dataset(data));
  save_dataset((dir / "dataset.bin").string(), table);
  out << "wrote " << (dir / "dataset.bin").string() << ": " << table.sites.size() << " sites of "
      << table.feature_shape[1] << "x" << table.feature_shape[2] << " mosaics\n";
}

void cmd_meta_train(const Settings& s, std::ostream& out) {
  const MetaConfig config = meta_config(s);
  const std::size_t workers = threads(s);
  check_arch(s);
  const std::string data = existing_file(s, "data");
  const fs::path dir = output_dir(s);
  write_text(dir / ("resolved_" + s.str("command") + ".ini"), s.to_ini());

  const SiteTable table = load_dataset(data);
  const ModelSpec spec = model_for(s, table);
  std::vector<EpochLog> log;
  TrainOptions options;
  options.threads = workers;
  options.on_epoch = [&](const EpochLog& row) {
    log.push_back(row);
    write_text(dir / "train_log.csv", format_log_csv(log));
  };
  const TrainResult result = meta_train(table, spec, config, options);
  write_text(dir / "train_log.csv", format_log_csv(result.log));

  const fs::path ckpt_dir = dir / "checkpoints";
  fs::create_directories(ckpt_dir);
  for (std::size_t i = 0; i < CheckpointRing::kCapacity; ++i) fs::remove(checkpoint_path(ckpt_dir, i));
  for (std::size_t i = 0; i < result.ring.size(); ++i) {
    save_checkpoint(checkpoint_path(ckpt_dir, i).string(), result.ring[i]);
  }
  out << "trained " << result.log.size() << " epochs (" << result.stop_reason << "); best validation AUC "
      << std::fixed << std::setprecision(4) << result.ring[0].val_score << " at epoch " << result.ring[0].epoch
      << "; " << result.ring.size() << " checkpoints in " << ckpt_dir.string() << "\n";
}

void cmd_meta_test(const Settings& s, std::ostream& out) {
  const MetaConfig config = meta_config(s);
  const FewShotOptions options{s.u64("seed"), threads(s)};
  const std::string data = existing_file(s, "data");
  const fs::path dir = output_dir(s);
  write_text(dir / ("resolved_" + s.str("command") + ".ini"), s.to_ini());
  const CheckpointRing ring = load_ring(s);
  const EvalReport r = finetune_few_shot(ring, load_dataset(data), config, options);
  write_report(dir, "few_shot", r);
  out << "few-shot pooled AUC " << std::fixed << std::setprecision(4) << r.pooled_auc << " over " << r.n
      << " examples from " << r.per_site.size() << " sites\n";
}

void cmd_zero_shot(const Settings& s, std::ostream& out) {
  const std::string data = existing_file(s, "data");
  const fs::path dir = output_dir(s);
  write_text(dir / ("resolved_" + s.str("command") + ".ini"), s.to_ini());
  const CheckpointRing ring = load_ring(s);
  const EvalReport r = zero_shot_eval(ring[0], load_dataset(data));
  write_report(dir, "zero_shot", r);
  out << "zero-shot AUC " << std::fixed << std::setprecision(4) << r.pooled_auc << " on site "
      << r.per_site[0].site_id << " (" << r.n << " examples)\n";
}

void cmd_baseline(const Settings& s, std::ostream& out) {
  const std::string kind = s.str("kind");
  if (kind != "transfer" && kind != "scratch") throw UsageError("kind: expected transfer or scratch, got '" + kind + "'");
  const MetaConfig config = meta_config(s);
  const BaselineConfig baseline = baseline_config(s);
  check_arch(s);
  const std::string data = existing_file(s, "data");
  const fs::path dir = output_dir(s);
  write_text(dir / ("resolved_" + s.str("command") + ".ini"), s.to_ini());

  const SiteTable table = load_dataset(data);
  const ModelSpec spec = model_for(s, table);
  if (kind == "transfer") {
    const BaselineResult r = transfer_baseline(table, spec, config, baseline);
    write_report(dir, "transfer", r.few_shot);
    write_report(dir, "transfer_zero_shot", r.zero_shot);
    write_text(dir / "pretrain_log.csv", format_log_csv(r.pretrain_log));
    out << "transfer few-shot AUC " << std::fixed << std::setprecision(4) << r.few_shot.pooled_auc
        << ", zero-shot AUC " << r.zero_shot.pooled_auc << "\n";
  } else {
    const BaselineResult r = scratch_baseline(table, spec, config, baseline);
    write_report(dir, "scratch", r.few_shot);
    out << "scratch few-shot AUC " << std::fixed << std::setprecision(4) << r.few_shot.pooled_auc << "\n";
  }
}

void cmd_search(Settings s, std::ostream& out) {
  const MetaConfig base = meta_config(s);
  const SearchSpace space = search_space(s);
  const std::size_t workers = threads(s);
  check_arch(s);
  const std::string data = existing_file(s, "data");
  const fs::path dir = output_dir(s);
  write_text(dir / ("resolved_" + s.str("command") + ".ini"), s.to_ini());

  const SiteTable table = load_dataset(data);
  const SearchResult r = random_search(space, table, model_for(s, table), base, workers);
  write_text(dir / "trials.csv", format_trials_csv(r.trials));
  // Ready to pass to meta-train --config.
  s.set("command", "meta-train");
  s.set("n_sites_per_episode", fmt(r.best.n_sites_per_episode));
  s.set("k_support", fmt(r.best.k_support));
  s.set("t_target", fmt(r.best.t_target));
  write_text(dir / "best_config.ini", s.to_ini());
  const auto& best = r.trials[r.best_index];
  out << "best trial " << best.index << ": n_sites=" << best.n_sites << " k_support=" << best.k_support
      << " t_target=" << best.t_target << " validation AUC " << std::fixed << std::setprecision(4) << best.score
      << "\n";
}

void cmd_report(const Settings& s, const std::vector<std::string>& files, std::ostream& out) {
  if (files.empty()) throw UsageError("report: give at least one report JSON file");
  std::vector<EvalReport> reports;
  for (const auto& f : files) {
    if (!fs::is_regular_file(f)) throw UsageError("report: no such file " + f);
    reports.push_back(report_from_json(read_text(f)));
  }
  std::ostringstream os;
  os << std::left << std::setw(22) << "protocol" << std::right << std::setw(7) << "sites" << std::setw(7) << "n"
     << std::setw(12) << "pooled_auc" << std::setw(10) << "bal_acc" << "\n";
  os << std::fixed << std::setprecision(3);
  for (const auto& r : reports) {
    os << std::left << std::setw(22) << r.protocol << std::right << std::setw(7) << r.per_site.size() << std::setw(7)
       << r.n << std::setw(12) << r.pooled_auc << std::setw(10) << r.balanced_accuracy << "\n";
  }
  for (const auto& r : reports) {
    os << "\n" << r.protocol << " per site:\n";
    for (const auto& site : r.per_site) os << "  site " << site.site_id << "  auc " << site.auc << "  n " << site.n << "\n";
  }
  out << os.str();
  if (!s.str("out").empty()) {
    const fs::path dir = output_dir(s);
    write_text(dir / ("resolved_" + s.str("command") + ".ini"), s.to_ini());
    write_text(dir / "summary.txt", os.str());
  }
}

std::string hyphenated(std::string name) {
  std::replace(name.begin(), name.end(), '_', '-');
  return name;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Site-agnostic meta-learning: data generation, meta-training and evaluation", "saml_cli"};
  app.require_subcommand(1);
  app.fallthrough();

  Settings settings;
  std::string config_path;
  app.add_option("--config", config_path, "INI file with [section] key = value settings");
  std::map<std::string, std::string> values;
  std::vector<std::pair<std::string, CLI::Option*>> flags;
  for (const auto& k : settings.keys()) {
    if (k.name == "command") continue;
    std::string names = "--" + k.name;
    if (k.name.find('_') != std::string::npos) names += ",--" + hyphenated(k.name);
    auto* opt = app.add_option(names, values[k.name], k.help + " [" + k.section + "]");
    if (!k.value.empty()) opt->default_str(k.value);
    flags.emplace_back(k.name, opt);
  }

  std::vector<std::string> report_files;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"gen-data", "generate a synthetic multi-site dataset"},
      {"preprocess", "turn a volume dataset into z-scored mosaics"},
      {"meta-train", "meta-train and keep the best checkpoints"},
      {"meta-test", "fine-tune the checkpoints on each meta-test site"},
      {"zero-shot", "score the best checkpoint on the zero-shot site"},
      {"baseline", "run the transfer or scratch baseline (--kind)"},
      {"search", "random search over episode shapes"},
      {"report", "summarize report JSON files"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    if (name == "report") sub->add_option("files", report_files, "report JSON files");
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    if (!config_path.empty()) {
      if (!fs::is_regular_file(config_path)) throw UsageError("--config: no such file " + config_path);
      settings.merge_file(config_path);
    }
    for (const auto& [name, opt] : flags)
      if (opt->count() > 0) settings.set(name, values[name]);
    settings.set("command", command);
    // A shortened run keeps the default patience within its epoch budget.
    if (!settings.is_explicit("early_stop_patience")) {
      const std::size_t epochs = settings.count("max_epochs");
      if (epochs > 0 && settings.count("early_stop_patience") > epochs) settings.set("early_stop_patience", fmt(epochs));
    }

    if (command == "gen-data") cmd_gen_data(settings, out);
    else if (command == "preprocess") cmd_preprocess(settings, out);
    else if (command == "meta-train") cmd_meta_train(settings, out);
    else if (command == "meta-test") cmd_meta_test(settings, out);
    else if (command == "zero-shot") cmd_zero_shot(settings, out);
    else if (command == "baseline") cmd_baseline(settings, out);
    else if (command == "search") cmd_search(settings, out);
    else cmd_report(settings, report_files, out);
    return kExitOk;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\nrun 'saml_cli " << command << " --help' for options\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace saml::cli
