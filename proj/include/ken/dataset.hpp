#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "ken/errors.hpp"
#include "ken/io.hpp"
#include "ken/rng.hpp"
#include "ken/tensor.hpp"

namespace ken {

// One sample's precomputed embeddings: text/image/caption/evidence sequences
// of shared width d, plus the CLIP vector pair of width d_c.
struct EmbeddingBundle {
  std::string id;
  Tensor T;    // [m x d] text tokens
  Tensor V;    // [n x d] image regions
  Tensor P;    // [z x d] caption tokens
  Tensor R;    // [u x d] evidence tokens
  Tensor t_c;  // [d_c]
  Tensor v_c;  // [d_c]
  int y = 0;   // 0 = fake, 1 = real
  int cluster = -1;  // latent emotion cluster; -1 when unknown (real data)
};

struct SyntheticSpec {
  int samples = 16;
  int d = 32;
  int d_c = 32;
  int m = 6;
  int n = 4;
  int z = 5;
  int u = 5;
  double class_separation = 1.0;
  int emotion_clusters = 2;
  std::uint64_t seed = 0;
};

struct Dataset {
  std::string name;
  int d = 0, d_c = 0, m = 0, n = 0, z = 0, u = 0;
  std::uint64_t split_seed = 0;
  std::vector<EmbeddingBundle> bundles;  // manifest order
  std::map<std::string, std::vector<std::string>> splits;

  const EmbeddingBundle& bundle(const std::string& id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) throw ConfigError("unknown sample id '" + id + "'");
    return bundles[it->second];
  }

  const std::vector<std::string>& split_ids(const std::string& split) const {
    auto it = splits.find(split);
    if (it == splits.end()) throw ConfigError("unknown split '" + split + "'");
    return it->second;
  }

  void rebuild_index() {
    by_id_.clear();
    for (std::size_t i = 0; i < bundles.size(); ++i) by_id_[bundles[i].id] = i;
  }

 private:
  std::unordered_map<std::string, std::size_t> by_id_;
};

// ---------------------------------------------------------------------------
// Synthetic generation

inline void validate_spec(const SyntheticSpec& spec) {
  if (spec.samples < 1 || spec.d < 1 || spec.d_c < 1 || spec.m < 1 || spec.n < 1 ||
      spec.z < 1 || spec.u < 1 || spec.emotion_clusters < 1) {
    throw ConfigError("synthetic spec requires all dims and counts >= 1");
  }
  if (spec.class_separation < 0.0) {
    throw ConfigError("class_separation must be >= 0");
  }
}

namespace detail {

// Structure constants for the generator. Cluster centers sit on a radius-8
// shell so cluster identity dominates pooled features; the class shift runs
// along the all-ones direction; an additional label-aligned correction runs
// along a per-cluster Walsh direction, so reading it takes one matched filter
// per cluster, which is the structure the gated processor bank is built to
// exploit and a single shared processor has to spend capacity approximating.
inline constexpr double kClusterRadius = 8.0;
inline constexpr double kCorrectionStrength = 0.4;  // times class_separation
inline constexpr double kClusterLabelCorrelation = 0.8;  // times min(1, separation)

}  // namespace detail

inline std::vector<EmbeddingBundle> generate_synthetic(const SyntheticSpec& spec) {
  validate_spec(spec);
  RngStream synth = named_stream(spec.seed, "synth");
  RngStream center_rng = named_stream(spec.seed, "clusters");

  const int K = spec.emotion_clusters;
  std::vector<std::vector<double>> centers(static_cast<std::size_t>(K));
  for (auto& center : centers) {
    center.resize(static_cast<std::size_t>(spec.d));
    double norm = 0.0;
    for (double& v : center) {
      v = center_rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : center) v = detail::kClusterRadius * v / norm;
  }

  const double sep = spec.class_separation;
  const double rho = detail::kClusterLabelCorrelation * std::min(1.0, sep);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(spec.d));
  const double inv_sqrt_dc = 1.0 / std::sqrt(static_cast<double>(spec.d_c));

  std::vector<EmbeddingBundle> out;
  out.reserve(static_cast<std::size_t>(spec.samples));
  for (int i = 0; i < spec.samples; ++i) {
    EmbeddingBundle b;
    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "s%04d", i);
    b.id = idbuf;
    b.y = i % 2;
    const double cls = b.y == 1 ? 1.0 : -1.0;

    // Cluster draw: with probability rho, among clusters whose parity matches
    // the label; otherwise uniform. rho = 0 at separation 0, so features stay
    // label-independent there.
    int c;
    const bool matched = synth.next_unit() < rho;
    std::vector<int> pool;
    for (int cand = 0; cand < K; ++cand) {
      if (!matched || cand % 2 == b.y) pool.push_back(cand);
    }
    if (pool.empty()) for (int cand = 0; cand < K; ++cand) pool.push_back(cand);
    c = pool[static_cast<std::size_t>(synth.next_below(pool.size()))];
    b.cluster = c;
    // Walsh row for this cluster's correction direction: sign-balanced,
    // orthogonal to the all-ones class direction, and distinct across
    // clusters (exactly so when d is a power of two and K < d).
    const unsigned walsh_row =
        spec.d > 1 ? static_cast<unsigned>(1 + c % (spec.d - 1)) : 0u;

    // CLIP pair: aligned for half the samples (independent of label), fresh
    // draw for the rest so cosine sits near zero.
    const bool aligned = ((i >> 1) & 1) == 0;
    b.t_c = Tensor({spec.d_c});
    for (int j = 0; j < spec.d_c; ++j) {
      b.t_c.at(j) = synth.normal() + cls * (sep / 2.0) * inv_sqrt_dc;
    }
    if (aligned) {
      b.v_c = Tensor({spec.d_c});
      for (int j = 0; j < spec.d_c; ++j) b.v_c.at(j) = b.t_c.at(j);
    } else {
      b.v_c = Tensor({spec.d_c});
      for (int j = 0; j < spec.d_c; ++j) {
        b.v_c.at(j) = synth.normal() + cls * (sep / 2.0) * inv_sqrt_dc;
      }
    }

    auto fill_seq = [&](int len, bool with_cluster) {
      Tensor t({len, spec.d});
      for (int r = 0; r < len; ++r) {
        for (int j = 0; j < spec.d; ++j) {
          const double dir1 = inv_sqrt_d;
          const double walsh_sign =
              std::popcount(walsh_row & static_cast<unsigned>(j)) % 2 == 0 ? 1.0 : -1.0;
          double shift = cls * (sep / 2.0) * dir1;
          if (with_cluster) {
            shift += cls * detail::kCorrectionStrength * sep * walsh_sign * inv_sqrt_d;
            shift += centers[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)];
          }
          t.at(r, j) = synth.normal() + shift;
        }
      }
      return t;
    };
    b.T = fill_seq(spec.m, true);
    b.V = fill_seq(spec.n, true);
    b.P = fill_seq(spec.z, false);
    b.R = fill_seq(spec.u, false);

    // Disk format is f32; quantize now so memory and disk stay bit-identical.
    for (Tensor* t : {&b.T, &b.V, &b.P, &b.R, &b.t_c, &b.v_c}) quantize_f32(*t);
    out.push_back(std::move(b));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Splitting

// Stratified by label. Per-class counts use largest-remainder rounding;
// remainder ties rotate with the class index so symmetric ratios do not starve
// the same split for every class.
inline std::array<std::vector<std::string>, 3> stratified_split(
    const std::vector<EmbeddingBundle>& data, const std::array<double, 3>& ratios,
    std::uint64_t seed) {
  double sum = 0.0;
  for (double r : ratios) {
    if (r <= 0.0) throw ConfigError("split ratios must be positive");
    sum += r;
  }
  if (std::fabs(sum - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1, got " + std::to_string(sum));
  }

  std::map<int, std::vector<std::string>> by_label;
  for (const auto& b : data) by_label[b.y].push_back(b.id);

  RngStream rng = named_stream(seed, "split");
  std::array<std::vector<std::string>, 3> out;
  int class_idx = 0;
  for (auto& [label, ids] : by_label) {
    for (std::size_t i = ids.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
      std::swap(ids[i - 1], ids[j]);
    }

    const int n_class = static_cast<int>(ids.size());
    std::array<int, 3> counts;
    std::array<double, 3> rem;
    int assigned = 0;
    for (int s = 0; s < 3; ++s) {
      const double target = n_class * ratios[static_cast<std::size_t>(s)];
      counts[static_cast<std::size_t>(s)] = static_cast<int>(std::floor(target));
      rem[static_cast<std::size_t>(s)] = target - counts[static_cast<std::size_t>(s)];
      assigned += counts[static_cast<std::size_t>(s)];
    }
    std::array<int, 3> order = {0, 1, 2};
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (rem[static_cast<std::size_t>(a)] != rem[static_cast<std::size_t>(b)]) {
        return rem[static_cast<std::size_t>(a)] > rem[static_cast<std::size_t>(b)];
      }
      const int ka = (a + class_idx) % 3;
      const int kb = (b + class_idx) % 3;
      if (ka != kb) return ka < kb;
      return a < b;
    });
    for (int leftover = n_class - assigned, idx = 0; leftover > 0; --leftover, ++idx) {
      counts[static_cast<std::size_t>(order[static_cast<std::size_t>(idx % 3)])] += 1;
    }

    std::size_t cursor = 0;
    for (int s = 0; s < 3; ++s) {
      for (int cnt = 0; cnt < counts[static_cast<std::size_t>(s)]; ++cnt) {
        out[static_cast<std::size_t>(s)].push_back(ids[cursor++]);
      }
    }
    ++class_idx;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest + blob persistence

namespace detail {

inline const std::array<const char*, 6> kTensorKeys = {"T", "V", "P", "R", "t_c", "v_c"};

inline Tensor& bundle_tensor(EmbeddingBundle& b, const std::string& key) {
  if (key == "T") return b.T;
  if (key == "V") return b.V;
  if (key == "P") return b.P;
  if (key == "R") return b.R;
  if (key == "t_c") return b.t_c;
  return b.v_c;
}

inline const Tensor& bundle_tensor(const EmbeddingBundle& b, const std::string& key) {
  return bundle_tensor(const_cast<EmbeddingBundle&>(b), key);
}

inline Shape expected_shape(const Dataset& ds, const std::string& key) {
  if (key == "T") return {ds.m, ds.d};
  if (key == "V") return {ds.n, ds.d};
  if (key == "P") return {ds.z, ds.d};
  if (key == "R") return {ds.u, ds.d};
  return {ds.d_c};
}

}  // namespace detail

inline Dataset assemble_dataset(std::string name, int d, int d_c, int m, int n, int z, int u,
                                std::vector<EmbeddingBundle> bundles,
                                std::array<std::vector<std::string>, 3> split_lists,
                                std::uint64_t split_seed) {
  Dataset ds;
  ds.name = std::move(name);
  ds.d = d;
  ds.d_c = d_c;
  ds.m = m;
  ds.n = n;
  ds.z = z;
  ds.u = u;
  ds.split_seed = split_seed;
  ds.bundles = std::move(bundles);
  ds.splits["train"] = std::move(split_lists[0]);
  ds.splits["val"] = std::move(split_lists[1]);
  ds.splits["test"] = std::move(split_lists[2]);
  ds.rebuild_index();
  return ds;
}

inline void write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["name"] = ds.name;
  manifest["dims"] = {{"d", ds.d}, {"d_c", ds.d_c}, {"m", ds.m},
                      {"n", ds.n}, {"z", ds.z},     {"u", ds.u}};
  manifest["sample_count"] = ds.bundles.size();
  manifest["split_seed"] = ds.split_seed;
  for (const auto& [split, ids] : ds.splits) manifest["splits"][split] = ids;

  nlohmann::json samples = nlohmann::json::array();
  for (const auto& b : ds.bundles) {
    nlohmann::json rec;
    rec["id"] = b.id;
    rec["label"] = b.y;
    rec["cluster"] = b.cluster;
    nlohmann::json tensors;
    for (const char* key : detail::kTensorKeys) {
      const std::string file = b.id + "_" + key + ".kent";
      tensors[key] = file;
      write_blob(dir / file, detail::bundle_tensor(b, key));
    }
    rec["tensors"] = tensors;
    samples.push_back(rec);
  }
  manifest["samples"] = samples;

  std::ofstream os(dir / "manifest.json", std::ios::trunc);
  if (!os) throw IoError("cannot write manifest in '" + dir.string() + "'");
  os << manifest.dump(2) << "\n";
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  const std::filesystem::path manifest_path = dir / "manifest.json";
  std::ifstream is(manifest_path);
  if (!is) {
    throw DataError(DataError::Kind::missing_file,
                    "missing manifest '" + manifest_path.string() + "'");
  }
  nlohmann::json manifest;
  try {
    is >> manifest;
  } catch (const std::exception& e) {
    throw DataError(DataError::Kind::bad_manifest,
                    "unparsable manifest '" + manifest_path.string() + "': " + e.what());
  }

  Dataset ds;
  try {
    ds.name = manifest.at("name").get<std::string>();
    const auto& dims = manifest.at("dims");
    ds.d = dims.at("d").get<int>();
    ds.d_c = dims.at("d_c").get<int>();
    ds.m = dims.at("m").get<int>();
    ds.n = dims.at("n").get<int>();
    ds.z = dims.at("z").get<int>();
    ds.u = dims.at("u").get<int>();
    ds.split_seed = manifest.at("split_seed").get<std::uint64_t>();
  } catch (const std::exception& e) {
    throw DataError(DataError::Kind::bad_manifest, std::string("manifest field error: ") + e.what());
  }
  if (ds.d < 1 || ds.d_c < 1 || ds.m < 1 || ds.n < 1 || ds.z < 1 || ds.u < 1) {
    throw DataError(DataError::Kind::bad_manifest, "manifest dims must be >= 1");
  }

  if (!manifest.contains("samples") || !manifest["samples"].is_array()) {
    throw DataError(DataError::Kind::bad_manifest, "manifest lacks a samples array");
  }
  for (const auto& rec : manifest["samples"]) {
    EmbeddingBundle b;
    try {
      b.id = rec.at("id").get<std::string>();
      b.y = rec.at("label").get<int>();
      b.cluster = rec.value("cluster", -1);
    } catch (const std::exception& e) {
      throw DataError(DataError::Kind::bad_manifest, std::string("sample record error: ") + e.what());
    }
    if (b.y != 0 && b.y != 1) {
      throw DataError(DataError::Kind::bad_label,
                      "sample " + b.id + ": label " + std::to_string(b.y) + " outside {0,1}");
    }
    for (const char* key : detail::kTensorKeys) {
      std::string file;
      try {
        file = rec.at("tensors").at(key).get<std::string>();
      } catch (const std::exception& e) {
        throw DataError(DataError::Kind::bad_manifest,
                        "sample " + b.id + ": tensor table error: " + e.what());
      }
      const std::string context = "sample " + b.id + " tensor " + key;
      Tensor t = read_blob(dir / file, context);
      const Shape expected = detail::expected_shape(ds, key);
      if (t.shape() != expected) {
        throw DataError(DataError::Kind::shape_mismatch,
                        context + ": manifest declares " + shape_str(expected) + ", blob has " +
                            shape_str(t.shape()));
      }
      if (!t.all_finite()) {
        throw DataError(DataError::Kind::non_finite, context + " contains a non-finite value");
      }
      detail::bundle_tensor(b, key) = t;
    }
    for (const char* key : {"t_c", "v_c"}) {
      const Tensor& v = key == std::string("t_c") ? b.t_c : b.v_c;
      double norm = 0.0;
      for (double x : v.data()) norm += x * x;
      if (norm == 0.0) {
        throw DataError(DataError::Kind::zero_norm_clip,
                        "sample " + b.id + ": " + key + " has zero norm");
      }
    }
    ds.bundles.push_back(std::move(b));
  }
  ds.rebuild_index();

  if (!manifest.contains("splits") || !manifest["splits"].is_object()) {
    throw DataError(DataError::Kind::bad_manifest, "manifest lacks a splits table");
  }
  std::unordered_set<std::string> seen;
  for (const auto& [split, ids] : manifest["splits"].items()) {
    std::vector<std::string> list;
    for (const auto& id : ids) {
      const std::string sid = id.get<std::string>();
      try {
        ds.bundle(sid);
      } catch (const ConfigError&) {
        throw DataError(DataError::Kind::bad_manifest,
                        "split '" + split + "' references unknown sample '" + sid + "'");
      }
      if (!seen.insert(sid).second) {
        throw DataError(DataError::Kind::bad_manifest,
                        "sample '" + sid + "' appears in more than one split");
      }
      list.push_back(sid);
    }
    ds.splits[split] = std::move(list);
  }
  if (seen.size() != ds.bundles.size()) {
    throw DataError(DataError::Kind::bad_manifest, "splits do not cover every sample");
  }
  return ds;
}

}  // namespace ken
