#pragma once

// Block matching: k nearest patches of every reference patch inside a local
// search window, then a seeded choice that gives each patch exactly one cluster.

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "crfrestore/image.hpp"
#include "crfrestore/parallel.hpp"
#include "crfrestore/random.hpp"

namespace crf {

struct Cluster {
  std::size_t reference_index = 0;
  /// Ascending (distance, index); the reference itself comes first.
  std::vector<std::size_t> member_indices;
};

/// Maps every clustered patch to the single cluster whose parameters it uses.
struct Assignment {
  static constexpr std::int64_t unassigned = -1;

  std::vector<std::int64_t> cluster_of;  ///< indexed by patch index
  /// Patches of each cluster after the unique choice, ascending patch index.
  std::vector<std::vector<std::size_t>> assigned;

  /// Patch indices with a cluster, ascending.
  std::vector<std::size_t> active_patches() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < cluster_of.size(); ++i)
      if (cluster_of[i] != unassigned) out.push_back(i);
    return out;
  }
};

/// Inclusive range of top-left positions searched around `center` along one axis.
/// The window has `window` positions, offsets [-window/2, window - window/2 - 1],
/// truncated at the borders.
inline std::pair<std::size_t, std::size_t> search_range(std::size_t center, std::size_t window,
                                                        std::size_t count) {
  const std::size_t before = window / 2;
  const std::size_t after = window - before - 1;
  const std::size_t lo = center >= before ? center - before : 0;
  const std::size_t hi = std::min(count - 1, center + after);
  return {lo, hi};
}

namespace detail {

inline double squared_distance(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

inline Cluster match_reference(const Eigen::MatrixXd& patches, const PatchSystem& sys,
                               std::size_t ref, std::size_t k_total, std::size_t window,
                               std::vector<std::pair<double, std::size_t>>& scratch) {
  const auto pos = sys.position(ref);
  const auto [r0, r1] = search_range(pos.row, window, sys.position_rows());
  const auto [c0, c1] = search_range(pos.col, window, sys.position_cols());
  const std::size_t n = sys.dim();
  const double* refp = patches.col(static_cast<Eigen::Index>(ref)).data();

  scratch.clear();
  for (std::size_t r = r0; r <= r1; ++r) {
    for (std::size_t c = c0; c <= c1; ++c) {
      const std::size_t idx = r * sys.position_cols() + c;
      const double d =
          idx == ref ? 0.0 : squared_distance(refp, patches.col(static_cast<Eigen::Index>(idx)).data(), n);
      scratch.emplace_back(d, idx);
    }
  }
  const std::size_t keep = std::min(k_total, scratch.size());
  // lexicographic (distance, index) places the reference (distance 0, and
  // among zero-distance duplicates) ahead of all non-identical patches
  auto by_dist = [ref](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    if ((a.second == ref) != (b.second == ref)) return a.second == ref;
    return a.second < b.second;
  };
  std::partial_sort(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(keep), scratch.end(),
                    by_dist);
  Cluster cl;
  cl.reference_index = ref;
  cl.member_indices.reserve(keep);
  for (std::size_t k = 0; k < keep; ++k) cl.member_indices.push_back(scratch[k].second);
  return cl;
}

}  // namespace detail

/// One cluster per reference position: the `k_total` patches (reference
/// included) with smallest squared Euclidean distance to the reference among
/// the positions of its search window. `patches` holds patch k in column k.
inline std::vector<Cluster> build_clusters(const Eigen::MatrixXd& patches, const PatchSystem& sys,
                                           std::size_t k_total, std::size_t window,
                                           unsigned threads = 1) {
  if (k_total < 1) throw std::invalid_argument("build_clusters: k_total must be >= 1");
  if (window < sys.patch_size()) throw std::invalid_argument("build_clusters: window smaller than patch");
  if (patches.rows() != static_cast<Eigen::Index>(sys.dim()) ||
      patches.cols() != static_cast<Eigen::Index>(sys.num_patches())) {
    throw DimensionError("build_clusters: patch matrix does not match patch system");
  }
  const auto& refs = sys.reference_indices();
  std::vector<Cluster> clusters(refs.size());
  parallel_for(refs.size(), threads, [&](std::size_t begin, std::size_t end) {
    std::vector<std::pair<double, std::size_t>> scratch;
    for (std::size_t k = begin; k < end; ++k)
      clusters[k] = detail::match_reference(patches, sys, refs[k], k_total, window, scratch);
  });
  return clusters;
}

/// Gives every patch that occurs in at least one cluster exactly one of the
/// clusters containing it, uniformly at random. The draw for patch i depends
/// only on (seed, i), so the result is independent of scheduling.
inline Assignment assign_unique(const std::vector<Cluster>& clusters, std::size_t num_patches,
                                std::uint64_t seed) {
  if (clusters.empty()) throw std::invalid_argument("assign_unique: no clusters");
  std::vector<std::uint32_t> count(num_patches, 0);
  for (const auto& cl : clusters)
    for (auto idx : cl.member_indices) {
      if (idx >= num_patches) throw IndexError("assign_unique: member index out of range");
      ++count[idx];
    }
  // chosen[i] = rank (in ascending cluster order) of the cluster patch i keeps
  std::vector<std::uint32_t> chosen(num_patches, 0);
  for (std::size_t i = 0; i < num_patches; ++i)
    if (count[i] > 1) chosen[i] = static_cast<std::uint32_t>(counter_index(seed, i, count[i]));

  Assignment a;
  a.cluster_of.assign(num_patches, Assignment::unassigned);
  a.assigned.resize(clusters.size());
  std::vector<std::uint32_t> seen(num_patches, 0);
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    for (auto idx : clusters[c].member_indices) {
      if (seen[idx]++ == chosen[idx]) a.cluster_of[idx] = static_cast<std::int64_t>(c);
    }
  }
  for (std::size_t i = 0; i < num_patches; ++i)
    if (a.cluster_of[i] != Assignment::unassigned)
      a.assigned[static_cast<std::size_t>(a.cluster_of[i])].push_back(i);
  return a;
}

/// Makes the assigned patches cover every pixel. For each uncovered pixel the
/// patch centred on it (clamped to the image) joins the cluster whose reference
/// position is nearest. Returns the number of patches added; zero whenever the
/// reference stride does not exceed the patch size.
inline std::size_t complete_coverage(Assignment& a, const std::vector<Cluster>& clusters,
                                     const PatchSystem& sys) {
  const std::size_t ps = sys.patch_size();
  std::vector<std::uint8_t> covered(sys.width() * sys.height(), 0);
  auto cover = [&](std::size_t idx) {
    const std::size_t base = sys.anchor(idx);
    for (auto off : sys.offsets()) covered[base + off] = 1;
  };
  for (std::size_t i = 0; i < a.cluster_of.size(); ++i)
    if (a.cluster_of[i] != Assignment::unassigned) cover(i);

  std::size_t added = 0;
  for (std::size_t p = 0; p < covered.size(); ++p) {
    if (covered[p]) continue;
    const std::size_t row = p / sys.width();
    const std::size_t col = p % sys.width();
    const std::size_t pr = std::min(row >= ps / 2 ? row - ps / 2 : 0, sys.position_rows() - 1);
    const std::size_t pc = std::min(col >= ps / 2 ? col - ps / 2 : 0, sys.position_cols() - 1);
    const std::size_t idx = sys.index_of(pr, pc);
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < clusters.size(); ++c) {
      const auto rp = sys.position(clusters[c].reference_index);
      const double dr = double(rp.row) - double(pr);
      const double dc = double(rp.col) - double(pc);
      const double d = dr * dr + dc * dc;
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    if (a.cluster_of[idx] == Assignment::unassigned) {
      a.cluster_of[idx] = static_cast<std::int64_t>(best);
      auto& list = a.assigned[best];
      list.insert(std::lower_bound(list.begin(), list.end(), idx), idx);
      ++added;
    }
    cover(idx);
  }
  return added;
}

}  // namespace crf
