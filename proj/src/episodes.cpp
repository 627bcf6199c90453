// SPDX-License-Identifier: Apache-2.0
#include "saml/episodes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "saml/errors.hpp"
#include "saml/serialize.hpp"

namespace saml {

std::string to_string(Role role) {
  switch (role) {
    case Role::meta_train: return "meta_train";
    case Role::meta_val: return "meta_val";
    case Role::meta_test: return "meta_test";
    case Role::zero_shot: return "zero_shot";
  }
  return "unknown";
}

const SiteDataset& SiteTable::site(int id) const {
  for (const auto& s : sites)
    if (s.site_id == id) return s;
  throw SpecError("site table: no site with id " + std::to_string(id));
}

void SiteTable::validate() const {
  std::set<int> ids;
  for (const auto& s : sites) {
    if (!ids.insert(s.site_id).second) throw SpecError("site table: duplicate site id " + std::to_string(s.site_id));
    if (s.features.rank() != feature_shape.size() + 1 || s.features.shape()[0] != s.labels.size() ||
        !std::equal(feature_shape.begin(), feature_shape.end(), s.features.shape().begin() + 1)) {
      throw SpecError("site " + std::to_string(s.site_id) + ": features " + shape_str(s.features.shape()) +
                      " do not match " + std::to_string(s.labels.size()) + " labels of shape " +
                      shape_str(feature_shape));
    }
    for (int y : s.labels)
      if (y != 0 && y != 1) throw SpecError("site " + std::to_string(s.site_id) + ": non-binary label");
    for (double v : s.features.data())
      if (!std::isfinite(v)) throw SpecError("site " + std::to_string(s.site_id) + ": non-finite feature");
  }
  std::set<int> seen;
  for (const auto& list : roles) {
    for (int id : list) {
      if (!ids.count(id)) throw SpecError("site table: role lists unknown site " + std::to_string(id));
      if (!seen.insert(id).second) throw SpecError("site table: site " + std::to_string(id) + " has two roles");
    }
  }
  if (seen.size() != ids.size()) throw SpecError("site table: some sites have no role");
}

std::vector<std::size_t> parse_split(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, '/')) {
    if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos) {
      throw SpecError("split '" + text + "': expected counts separated by '/'");
    }
    out.push_back(std::stoul(part));
  }
  if (out.size() != 3 && out.size() != 4) throw SpecError("split '" + text + "': expected 3 or 4 parts");
  return out;
}

namespace {

std::mt19937_64 site_stream(std::uint64_t seed, std::uint64_t site, std::uint64_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(site), static_cast<std::uint32_t>(purpose)};
  return std::mt19937_64(seq);
}

// Shuffled labels with class counts n/2 and n - n/2.
std::vector<int> balanced_labels(std::size_t n, std::mt19937_64& rng) {
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = i < n / 2 ? 0 : 1;
  std::shuffle(labels.begin(), labels.end(), rng);
  return labels;
}

struct SiteTransform {
  std::vector<double> matrix;  // d x d, row-major
  std::vector<double> offset;  // d
  std::vector<double> meta() const {
    std::vector<double> m(matrix);
    m.insert(m.end(), offset.begin(), offset.end());
    return m;
  }
};

SiteTransform draw_transform(const SynthOptions& o, std::size_t site) {
  auto rng = site_stream(o.seed, site, 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t d = o.feature_dim;
  SiteTransform t;
  t.matrix.assign(d * d, 0.0);
  t.offset.assign(d, 0.0);
  const double spread = o.heterogeneity / std::sqrt(static_cast<double>(d));
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) t.matrix[i * d + j] = (i == j ? 1.0 : 0.0) + spread * normal(rng);
  for (auto& v : t.offset) v = o.heterogeneity * o.offset_scale * normal(rng);
  return t;
}

std::vector<double> class_direction(const SynthOptions& o) {
  auto rng = site_stream(o.seed, ~0ull, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> u(o.feature_dim);
  double norm = 0.0;
  for (auto& v : u) {
    v = normal(rng);
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (auto& v : u) v /= norm;
  return u;
}

SiteDataset draw_vector_site(const SynthOptions& o, int site_id, std::size_t source, std::uint64_t stream,
                             const SiteTransform& tf, const std::vector<double>& u) {
  auto rng = site_stream(o.seed, stream, 2);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t d = o.feature_dim, n = o.n_per_site;
  SiteDataset s;
  s.site_id = site_id;
  s.source_site = static_cast<int>(source);
  s.labels = balanced_labels(n, rng);
  s.site_meta = tf.meta();
  std::vector<double> x(n * d);
  std::vector<double> z(d);
  for (std::size_t e = 0; e < n; ++e) {
    const double sign = s.labels[e] == 1 ? 0.5 : -0.5;
    for (std::size_t j = 0; j < d; ++j) z[j] = sign * o.class_separation * u[j] + normal(rng);
    for (std::size_t i = 0; i < d; ++i) {
      double acc = tf.offset[i];
      for (std::size_t j = 0; j < d; ++j) acc += tf.matrix[i * d + j] * z[j];
      x[e * d + i] = acc;
    }
  }
  s.features = Tensor({n, d}, std::move(x));
  return s;
}

// Volumes: a smooth site-specific background, a central blob whose contrast
// carries the label, and per-site gain/offset scaled by heterogeneity.
SiteDataset draw_volume_site(const SynthOptions& o, int site_id, std::size_t source, std::uint64_t stream) {
  auto meta_rng = site_stream(o.seed, source, 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double gain = 1.0 + 0.3 * o.heterogeneity * normal(meta_rng);
  const double offset = o.heterogeneity * o.offset_scale * normal(meta_rng);
  const double tilt = o.heterogeneity * normal(meta_rng);

  auto rng = site_stream(o.seed, stream, 2);
  const std::size_t E = o.volume_extent, n = o.n_per_site;
  SiteDataset s;
  s.site_id = site_id;
  s.source_site = static_cast<int>(source);
  s.labels = balanced_labels(n, rng);
  s.site_meta = {gain, offset, tilt};
  std::vector<double> x(n * E * E * E);
  const double c = (static_cast<double>(E) - 1.0) / 2.0;
  const double r2 = std::max(1.0, c * c / 4.0);
  for (std::size_t e = 0; e < n; ++e) {
    const double contrast = (s.labels[e] == 1 ? 0.5 : -0.5) * o.class_separation;
    for (std::size_t i = 0; i < E; ++i)
      for (std::size_t j = 0; j < E; ++j)
        for (std::size_t k = 0; k < E; ++k) {
          const double di = i - c, dj = j - c, dk = k - c;
          const double blob = std::exp(-(di * di + dj * dj + dk * dk) / (2.0 * r2));
          const double background = tilt * di / std::max(1.0, c);
          x[((e * E + i) * E + j) * E + k] = gain * (background + contrast * blob + normal(rng)) + offset;
        }
  }
  s.features = Tensor({n, E, E, E}, std::move(x));
  return s;
}

}  // namespace

SiteTable synth_generate(const SynthOptions& o) {
  if (o.n_sites < 2) throw SpecError("synth_generate: need at least 2 sites");
  if (o.n_per_site < 8) throw SpecError("synth_generate: need at least 8 examples per site");
  if (!(o.heterogeneity >= 0.0)) throw SpecError("synth_generate: heterogeneity must be >= 0");
  if (o.volume_extent == 0 && o.feature_dim == 0) throw SpecError("synth_generate: feature_dim must be positive");
  if (o.volume_extent == 1) throw SpecError("synth_generate: volume extent must be at least 2");
  if (o.split.size() != 3 && o.split.size() != 4) throw SpecError("synth_generate: split needs 3 or 4 parts");
  if (std::accumulate(o.split.begin(), o.split.end(), std::size_t{0}) != o.n_sites) {
    throw SpecError("synth_generate: split does not sum to the number of sites");
  }
  const bool carve_val = o.split.size() == 3;
  const std::size_t n_train = o.split[0];
  const std::array<std::size_t, 4> counts =
      carve_val ? std::array<std::size_t, 4>{o.split[0], 0, o.split[1], o.split[2]}
                : std::array<std::size_t, 4>{o.split[0], o.split[1], o.split[2], o.split[3]};
  if (counts[0] == 0) throw SpecError("synth_generate: no meta-training sites");

  SiteTable table;
  const auto u = o.volume_extent ? std::vector<double>{} : class_direction(o);
  std::vector<SiteTransform> transforms;
  for (std::size_t s = 0; s < o.n_sites; ++s) {
    if (o.volume_extent == 0) transforms.push_back(draw_transform(o, s));
  }
  auto draw = [&](int id, std::size_t source, std::uint64_t stream) {
    return o.volume_extent ? draw_volume_site(o, id, source, stream)
                           : draw_vector_site(o, id, source, stream, transforms[source], u);
  };
  std::size_t next = 0;
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t i = 0; i < counts[r]; ++i, ++next) {
      table.sites.push_back(draw(static_cast<int>(next), next, next));
      table.roles[r].push_back(static_cast<int>(next));
    }
  }
  if (carve_val) {
    for (std::size_t s = 0; s < n_train; ++s) {
      const int id = static_cast<int>(o.n_sites + s);
      table.sites.push_back(draw(id, s, o.n_sites + s));
      table.roles[static_cast<std::size_t>(Role::meta_val)].push_back(id);
    }
  }
  table.feature_shape = o.volume_extent ? Shape{o.volume_extent, o.volume_extent, o.volume_extent}
                                        : Shape{o.feature_dim};
  table.validate();
  return table;
}

Tensor zscore(const Tensor& features) {
  if (!features.defined() || features.numel() == 0) throw ShapeError("zscore: empty input");
  const std::size_t examples = features.rank() <= 1 ? 1 : features.shape()[0];
  const std::size_t per = features.numel() / examples;
  std::vector<double> out(features.numel());
  const auto x = features.data();
  for (std::size_t e = 0; e < examples; ++e) {
    const double* p = x.data() + e * per;
    double m = 0.0;
    for (std::size_t i = 0; i < per; ++i) m += p[i];
    m /= static_cast<double>(per);
    double var = 0.0;
    for (std::size_t i = 0; i < per; ++i) var += (p[i] - m) * (p[i] - m);
    var /= static_cast<double>(per);
    if (!(var > 0.0)) throw ConstantInputError("zscore: example " + std::to_string(e) + " has zero variance");
    const double sd = std::sqrt(var);
    for (std::size_t i = 0; i < per; ++i) out[e * per + i] = (p[i] - m) / sd;
  }
  return Tensor(features.shape(), std::move(out));
}

namespace {

// Resample one axis of a row-major block with extents `dims` to `m` samples.
std::vector<double> resample_axis(const std::vector<double>& in, std::vector<std::size_t>& dims,
                                  std::size_t axis, std::size_t m) {
  const std::size_t n = dims[axis];
  std::size_t outer = 1, inner = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= dims[a];
  for (std::size_t a = axis + 1; a < dims.size(); ++a) inner *= dims[a];
  std::vector<double> out(outer * m * inner);
  for (std::size_t i = 0; i < m; ++i) {
    const double src = m == 1 ? 0.0 : static_cast<double>(i) * static_cast<double>(n - 1) / static_cast<double>(m - 1);
    auto lo = static_cast<std::size_t>(std::floor(src));
    if (lo > n - 1) lo = n - 1;
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double f = src - static_cast<double>(lo);
    for (std::size_t o = 0; o < outer; ++o) {
      const double* a = in.data() + (o * n + lo) * inner;
      const double* b = in.data() + (o * n + hi) * inner;
      double* dst = out.data() + (o * m + i) * inner;
      if (f == 0.0) {
        std::copy(a, a + inner, dst);
      } else {
        for (std::size_t k = 0; k < inner; ++k) dst[k] = (1.0 - f) * a[k] + f * b[k];
      }
    }
  }
  dims[axis] = m;
  return out;
}

constexpr std::size_t kCube = 91;
constexpr std::size_t kStride = 5;
constexpr std::size_t kSlices = (kCube - 1) / kStride + 1;  // 19

}  // namespace

Tensor resize_trilinear(const Tensor& volume, std::size_t e0, std::size_t e1, std::size_t e2) {
  if (volume.rank() != 3) throw ShapeError("resize_trilinear: expected rank 3, got " + shape_str(volume.shape()));
  std::vector<std::size_t> dims(volume.shape());
  std::vector<double> v(volume.data().begin(), volume.data().end());
  v = resample_axis(v, dims, 0, e0);
  v = resample_axis(v, dims, 1, e1);
  v = resample_axis(v, dims, 2, e2);
  return Tensor({e0, e1, e2}, std::move(v));
}

Tensor mosaic_preprocess(const Tensor& volume) {
  if (!volume.defined() || volume.rank() != 3) {
    throw ShapeError("mosaic_preprocess: expected a rank-3 volume, got " + shape_str(volume.shape()));
  }
  for (auto e : volume.shape())
    if (e < 2) throw ShapeError("mosaic_preprocess: extents must be >= 2, got " + shape_str(volume.shape()));
  check_finite(volume, "mosaic_preprocess");

  const Tensor cube = resize_trilinear(volume, kCube, kCube, kCube);
  const auto c = cube.data();
  auto at = [&](std::size_t i, std::size_t j, std::size_t k) { return c[(i * kCube + j) * kCube + k]; };

  const std::size_t rows = 3 * kCube, cols = kSlices * kCube;
  std::vector<double> tiled(rows * cols);
  for (std::size_t orient = 0; orient < 3; ++orient) {
    for (std::size_t s = 0; s < kSlices; ++s) {
      const std::size_t fixed = s * kStride;
      for (std::size_t r = 0; r < kCube; ++r)
        for (std::size_t q = 0; q < kCube; ++q) {
          double v = 0.0;
          switch (orient) {
            case 0: v = at(r, q, fixed); break;  // axial
            case 1: v = at(r, fixed, q); break;  // coronal
            default: v = at(fixed, r, q); break;  // sagittal
          }
          tiled[(orient * kCube + r) * cols + s * kCube + q] = v;
        }
    }
  }
  std::vector<std::size_t> dims{rows, cols};
  auto down = resample_axis(tiled, dims, 0, rows / 4);
  down = resample_axis(down, dims, 1, cols / 4);
  return Tensor({rows / 4, cols / 4}, std::move(down));
}

SiteTable preprocess_volumes(const SiteTable& table) {
  if (table.feature_shape.size() != 3) {
    throw ShapeError("preprocess: dataset features " + shape_str(table.feature_shape) + " are not volumes");
  }
  SiteTable out;
  out.roles = table.roles;
  out.feature_shape = {1, kMosaicRows, kMosaicCols};
  const std::size_t per = shape_numel(table.feature_shape);
  const std::size_t mosaic = kMosaicRows * kMosaicCols;
  for (const auto& s : table.sites) {
    SiteDataset d = s;
    const std::size_t n = s.size();
    std::vector<double> feats(n * mosaic);
    for (std::size_t e = 0; e < n; ++e) {
      const auto src = s.features.data().subspan(e * per, per);
      const Tensor vol(table.feature_shape, std::vector<double>(src.begin(), src.end()));
      const Tensor m = zscore(reshape(mosaic_preprocess(vol), {1, mosaic}));
      std::copy(m.data().begin(), m.data().end(), feats.begin() + static_cast<std::ptrdiff_t>(e * mosaic));
    }
    d.features = Tensor({n, 1, kMosaicRows, kMosaicCols}, std::move(feats));
    out.sites.push_back(std::move(d));
  }
  out.validate();
  return out;
}

// ---- episodes --------------------------------------------------------------

std::vector<int> Episode::site_ids() const {
  std::vector<int> ids;
  for (const auto& s : sites) ids.push_back(s.site_id);
  return ids;
}

Batch Episode::support() const {
  std::vector<Batch> parts;
  for (const auto& s : sites) parts.push_back(s.support);
  return concat(parts);
}

Batch Episode::target() const {
  std::vector<Batch> parts;
  for (const auto& s : sites) parts.push_back(s.target);
  return concat(parts);
}

Batch make_batch(const SiteDataset& site, const std::vector<std::size_t>& indices) {
  const auto& fs = site.features.shape();
  const std::size_t per = site.features.numel() / std::max<std::size_t>(fs[0], 1);
  std::vector<double> x(indices.size() * per);
  std::vector<double> y(indices.size());
  const auto src = site.features.data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t e = indices[i];
    if (e >= site.size()) throw EpisodeError("site " + std::to_string(site.site_id) + ": index out of range");
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(e * per), per, x.begin() + static_cast<std::ptrdiff_t>(i * per));
    y[i] = site.labels[e];
  }
  Shape shape(fs);
  shape[0] = indices.size();
  return {Tensor(std::move(shape), std::move(x)), Tensor({indices.size()}, std::move(y))};
}

Batch concat(const std::vector<Batch>& batches) {
  if (batches.empty()) throw ShapeError("concat: no batches");
  if (batches.size() == 1) return batches.front();
  Shape shape = batches.front().features.shape();
  std::vector<double> x, y;
  std::size_t n = 0;
  for (const auto& b : batches) {
    if (!std::equal(shape.begin() + 1, shape.end(), b.features.shape().begin() + 1, b.features.shape().end())) {
      throw ShapeError("concat: feature shapes differ");
    }
    x.insert(x.end(), b.features.data().begin(), b.features.data().end());
    y.insert(y.end(), b.labels.data().begin(), b.labels.data().end());
    n += b.size();
  }
  shape[0] = n;
  return {Tensor(std::move(shape), std::move(x)), Tensor({n}, std::move(y))};
}

std::vector<std::size_t> balanced_support(const SiteDataset& site, std::size_t k, std::mt19937_64& rng,
                                          std::vector<std::size_t>* rest) {
  if (k > site.size()) {
    throw EpisodeError("site " + std::to_string(site.site_id) + " has " + std::to_string(site.size()) +
                       " examples, support needs " + std::to_string(k));
  }
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < site.size(); ++i) by_class[static_cast<std::size_t>(site.labels[i])].push_back(i);
  for (auto& c : by_class) std::shuffle(c.begin(), c.end(), rng);

  // Which class takes the odd example; drawn unconditionally so the stream
  // does not depend on k's parity.
  const std::size_t first = std::uniform_int_distribution<int>(0, 1)(rng);
  std::array<std::size_t, 2> quota{};
  quota[first] = k - k / 2;
  quota[1 - first] = k / 2;
  for (std::size_t c = 0; c < 2; ++c) {
    if (quota[c] > by_class[c].size()) {
      quota[1 - c] += quota[c] - by_class[c].size();
      quota[c] = by_class[c].size();
    }
  }
  std::vector<std::size_t> support;
  std::array<std::size_t, 2> taken{};
  for (std::size_t turn = 0; support.size() < k; ++turn) {
    const std::size_t c = (first + turn) % 2;
    if (taken[c] < quota[c]) support.push_back(by_class[c][taken[c]++]);
  }
  if (rest) {
    rest->clear();
    for (std::size_t c = 0; c < 2; ++c)
      rest->insert(rest->end(), by_class[c].begin() + static_cast<std::ptrdiff_t>(taken[c]), by_class[c].end());
    std::sort(rest->begin(), rest->end());
  }
  return support;
}

Episode sample_episode(const SiteTable& table, Role role, std::size_t n_sites, std::size_t k_support,
                       std::size_t t_target, std::mt19937_64& rng) {
  const auto& ids = table.role(role);
  if (n_sites == 0) throw EpisodeError("sample_episode: n_sites must be positive");
  if (ids.size() < n_sites) {
    throw EpisodeError("sample_episode: role " + to_string(role) + " has " + std::to_string(ids.size()) +
                       " sites, episode needs " + std::to_string(n_sites));
  }
  std::vector<int> chosen;
  std::sample(ids.begin(), ids.end(), std::back_inserter(chosen), static_cast<std::ptrdiff_t>(n_sites), rng);
  std::shuffle(chosen.begin(), chosen.end(), rng);

  Episode ep;
  for (int id : chosen) {
    const auto& site = table.site(id);
    if (site.size() < k_support + t_target) {
      throw EpisodeError("site " + std::to_string(id) + " has " + std::to_string(site.size()) +
                         " examples, episode needs " + std::to_string(k_support + t_target));
    }
    SiteSplit split;
    split.site_id = id;
    std::vector<std::size_t> rest;
    split.support_idx = balanced_support(site, k_support, rng, &rest);
    std::shuffle(rest.begin(), rest.end(), rng);
    split.target_idx.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(t_target));
    split.support = make_batch(site, split.support_idx);
    split.target = make_batch(site, split.target_idx);
    ep.sites.push_back(std::move(split));
  }
  return ep;
}

// ---- dataset files ------------------------------------------------------------

namespace {
constexpr std::string_view kDataMagic = "SAMLDATA";
constexpr std::uint32_t kDataVersion = 1;
}  // namespace

std::string encode_dataset(const SiteTable& table) {
  table.validate();
  ByteWriter w;
  w.bytes(kDataMagic);
  w.u32(kDataVersion);
  w.u64(table.sites.size());
  for (const auto& list : table.roles) {
    w.u64(list.size());
    for (int id : list) w.i64(id);
  }
  for (const auto& s : table.sites) {
    w.i64(s.site_id);
    w.i64(s.source_site);
    w.u64(s.size());
  }
  w.u64(table.feature_shape.size());
  for (auto e : table.feature_shape) w.u64(e);
  for (const auto& s : table.sites) {
    const auto tag = "site" + std::to_string(s.site_id);
    write_tensor(w, tag + ".features", s.features);
    write_tensor(w, tag + ".labels", Tensor({s.size()}, std::vector<double>(s.labels.begin(), s.labels.end())));
    write_tensor(w, tag + ".meta", Tensor({s.site_meta.size()}, s.site_meta));
  }
  return w.take();
}

SiteTable decode_dataset(const std::string& bytes) {
  ByteReader r(bytes);
  if (bytes.size() < kDataMagic.size() || r.bytes(kDataMagic.size()) != kDataMagic) {
    throw FormatError("dataset: bad magic");
  }
  const auto version = r.u32();
  if (version != kDataVersion) throw FormatError("dataset: unsupported version " + std::to_string(version));
  const auto n_sites = r.u64();
  if (n_sites > 1'000'000) throw FormatError("dataset: implausible site count");
  SiteTable table;
  for (auto& list : table.roles) {
    const auto n = r.u64();
    if (n > n_sites) throw FormatError("dataset: role list longer than site count");
    for (std::uint64_t i = 0; i < n; ++i) list.push_back(static_cast<int>(r.i64()));
  }
  std::vector<std::uint64_t> counts;
  table.sites.resize(n_sites);
  for (auto& s : table.sites) {
    s.site_id = static_cast<int>(r.i64());
    s.source_site = static_cast<int>(r.i64());
    counts.push_back(r.u64());
  }
  const auto rank = r.u64();
  if (rank > 16) throw FormatError("dataset: feature rank too large");
  table.feature_shape.resize(rank);
  for (auto& e : table.feature_shape) e = r.u64();
  for (std::size_t i = 0; i < table.sites.size(); ++i) {
    auto& s = table.sites[i];
    const auto tag = "site" + std::to_string(s.site_id);
    auto [fname, features] = read_tensor(r);
    auto [lname, labels] = read_tensor(r);
    auto [mname, meta] = read_tensor(r);
    if (fname != tag + ".features" || lname != tag + ".labels" || mname != tag + ".meta") {
      throw FormatError("dataset: unexpected record order near " + tag);
    }
    if (labels.numel() != counts[i]) throw FormatError("dataset: " + tag + " label count disagrees with header");
    s.features = features;
    for (double y : labels.data()) s.labels.push_back(static_cast<int>(y));
    s.site_meta.assign(meta.data().begin(), meta.data().end());
  }
  if (!r.done()) throw FormatError("dataset: trailing bytes");
  try {
    table.validate();
  } catch (const SpecError& e) {
    throw FormatError(std::string("dataset: ") + e.what());
  }
  return table;
}

void save_dataset(const std::string& path, const SiteTable& table) { write_file(path, encode_dataset(table)); }
SiteTable load_dataset(const std::string& path) { return decode_dataset(read_file(path)); }

}  // namespace saml
