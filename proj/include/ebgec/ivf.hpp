#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

namespace ebgec {

// Inverted-file coarse quantizer: Lloyd k-means centroids, one posting list
// per centroid. Stores only entry ids; vectors stay in the owning store.
class IvfIndex {
 public:
  IvfIndex() = default;

  void train(std::span<const float> data, std::size_t dim, std::size_t n_clusters,
             int iterations, std::uint64_t seed);
  void add(std::span<const float> data);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t n_clusters() const noexcept { return lists_.size(); }
  std::size_t n_probe() const noexcept { return n_probe_; }
  void set_n_probe(std::size_t n) { n_probe_ = n; }

  std::size_t nearest_centroid(const float* vec) const;
  // Cluster ids ordered by centroid distance, ties by lower id.
  std::vector<std::size_t> probe_order(const float* query, std::size_t n_probe) const;

  // Candidate (squared distance, entry) pairs from the probed lists,
  // sorted ascending and cut to k.
  std::vector<std::pair<float, std::size_t>> search(std::span<const float> data,
                                                    const float* query, std::size_t k) const;

  const std::vector<std::vector<std::size_t>>& lists() const noexcept { return lists_; }
  const std::vector<float>& centroids() const noexcept { return centroids_; }

  void write(std::ostream& out) const;
  static IvfIndex read(std::istream& in, std::size_t expected_dim, std::size_t expected_count);

 private:
  std::size_t dim_ = 0;
  std::size_t n_probe_ = 8;
  std::vector<float> centroids_;  // n_clusters x dim
  std::vector<std::vector<std::size_t>> lists_;
};

}  // namespace ebgec
