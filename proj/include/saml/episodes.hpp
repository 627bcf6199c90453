// SPDX-License-Identifier: Apache-2.0
//
// Multi-site data: the site table, synthetic heterogeneous sites, dataset
// files and episodic support/target sampling.
#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "saml/backbone.hpp"
#include "saml/tensor.hpp"

namespace saml {

enum class Role : std::uint8_t { meta_train = 0, meta_val = 1, meta_test = 2, zero_shot = 3 };
inline constexpr std::array<Role, 4> kAllRoles{Role::meta_train, Role::meta_val, Role::meta_test,
                                               Role::zero_shot};
std::string to_string(Role role);

struct SiteDataset {
  int site_id = 0;
  // Site whose distribution generated these examples. Differs from site_id
  // only for validation splits carved out of a training site.
  int source_site = 0;
  Tensor features;  // [n, feature_shape...]
  std::vector<int> labels;
  std::vector<double> site_meta;

  std::size_t size() const { return labels.size(); }
};

struct SiteTable {
  std::vector<SiteDataset> sites;
  std::array<std::vector<int>, 4> roles;
  Shape feature_shape;

  const SiteDataset& site(int id) const;
  const std::vector<int>& role(Role r) const { return roles[static_cast<std::size_t>(r)]; }
  // Role lists disjoint, every site in exactly one role, labels binary and
  // sized to the features, features finite. Throws SpecError.
  void validate() const;
};

struct SynthOptions {
  std::size_t n_sites = 38;
  std::size_t n_per_site = 60;
  double heterogeneity = 1.0;
  std::uint64_t seed = 0;
  // Sites per role. Three entries (train/test/zero-shot) follow the
  // train-sites-double-as-validation layout: every training site also gets a
  // disjoint validation draw registered as its own meta_val site. Four
  // entries (train/val/test/zero-shot) split whole sites.
  std::vector<std::size_t> split{30, 7, 1};
  std::size_t feature_dim = 16;
  double class_separation = 2.0;
  // Per-site offset scale relative to heterogeneity.
  double offset_scale = 1.5;
  // When non-zero, each example is a cubic volume of this extent instead of
  // a feature vector.
  std::size_t volume_extent = 0;
};

std::vector<std::size_t> parse_split(const std::string& text);

// Each site draws two class-conditional Gaussians pushed through a per-site
// affine map x -> A x + o with ||A - I|| and ||o|| proportional to
// heterogeneity. Class counts differ by at most one within a site.
SiteTable synth_generate(const SynthOptions& options);

// Per-example standardization (population std). Rank-1 input is one example;
// otherwise the leading extent indexes examples. Throws ConstantInputError on
// an example with zero variance.
Tensor zscore(const Tensor& features);

// volume [d0,d1,d2] -> 68x432 mosaic:
//   trilinear resize to 91^3; for each orientation (axial fixes d2, coronal
//   fixes d1, sagittal fixes d0) keep slices 0,5,...,90; lay each
//   orientation's 19 slices side by side as one 91x1729 row and stack the
//   three rows into 273x1729; bilinear downsample by 0.25 (floor).
Tensor mosaic_preprocess(const Tensor& volume);

inline constexpr std::size_t kMosaicRows = 68;
inline constexpr std::size_t kMosaicCols = 432;

// Linear resampling of a [d0,d1,d2] block to new extents, corner-aligned.
Tensor resize_trilinear(const Tensor& volume, std::size_t e0, std::size_t e1, std::size_t e2);

struct SiteSplit {
  int site_id = 0;
  std::vector<std::size_t> support_idx;
  std::vector<std::size_t> target_idx;
  Batch support;
  Batch target;
};

struct Episode {
  std::vector<SiteSplit> sites;

  std::vector<int> site_ids() const;
  Batch support() const;
  Batch target() const;
};

Batch make_batch(const SiteDataset& site, const std::vector<std::size_t>& indices);
Batch concat(const std::vector<Batch>& batches);

// Class-balanced draw of k indices (as even as the class counts allow),
// alternating classes; the remaining indices are returned in `rest`.
std::vector<std::size_t> balanced_support(const SiteDataset& site, std::size_t k, std::mt19937_64& rng,
                                          std::vector<std::size_t>* rest);

Episode sample_episode(const SiteTable& table, Role role, std::size_t n_sites, std::size_t k_support,
                       std::size_t t_target, std::mt19937_64& rng);

// Dataset file: "SAMLDATA" | u32 version | u64 n_sites | 4 role lists
// (u64 count, i64 ids) | per site (i64 id, i64 source, u64 count) |
// feature shape (u64 rank, extents) | per site tensor records
// site<id>.features, site<id>.labels, site<id>.meta.
std::string encode_dataset(const SiteTable& table);
SiteTable decode_dataset(const std::string& bytes);
void save_dataset(const std::string& path, const SiteTable& table);
SiteTable load_dataset(const std::string& path);

// Applies mosaic_preprocess then per-example zscore to every volume.
SiteTable preprocess_volumes(const SiteTable& table);

}  // namespace saml
