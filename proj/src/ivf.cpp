#include "ebgec/ivf.hpp"

#include <algorithm>
#include <bit>
#include <string_view>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>

#include "ebgec/datastore.hpp"
#include "ebgec/error.hpp"
#include "ebgec/rng.hpp"

namespace ebgec {

namespace {

template <typename U>
void put(std::ostream& out, U v) {
  unsigned char b[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<unsigned char>(static_cast<std::uint64_t>(v) >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), sizeof(U));
}

template <typename U>
U get(std::istream& in) {
  unsigned char b[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(b), sizeof(U))) fail(ErrorCode::truncated_file, "index file is truncated");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return static_cast<U>(v);
}

}  // namespace

void IvfIndex::train(std::span<const float> data, std::size_t dim, std::size_t n_clusters,
                     int iterations, std::uint64_t seed) {
  if (dim == 0 || data.size() % dim != 0) fail(ErrorCode::invalid_input, "training data does not match dim");
  const std::size_t n = data.size() / dim;
  if (n == 0) fail(ErrorCode::invalid_state, "cannot train an index on an empty store");
  if (n_clusters == 0) fail(ErrorCode::invalid_config, "n_clusters must be >= 1");
  dim_ = dim;
  n_clusters = std::min(n_clusters, n);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = derive_rng(seed, 0);
  shuffle(order.begin(), order.end(), rng);
  centroids_.assign(n_clusters * dim, 0.0f);
  for (std::size_t c = 0; c < n_clusters; ++c) {
    std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(order[c] * dim), dim,
                centroids_.begin() + static_cast<std::ptrdiff_t>(c * dim));
  }
  lists_.assign(n_clusters, {});

  std::vector<std::size_t> assign(n, 0);
  std::vector<double> sums(n_clusters * dim);
  std::vector<std::size_t> counts(n_clusters);
  for (int it = 0; it < iterations; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = nearest_centroid(data.data() + i * dim);
      changed = changed || c != assign[i] || it == 0;
      assign[i] = c;
    }
    if (!changed) break;
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      for (std::size_t d = 0; d < dim; ++d) sums[assign[i] * dim + d] += data[i * dim + d];
    }
    // Empty clusters keep their previous centroid.
    for (std::size_t c = 0; c < n_clusters; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t d = 0; d < dim; ++d) {
        centroids_[c * dim + d] = static_cast<float>(sums[c * dim + d] / static_cast<double>(counts[c]));
      }
    }
  }
}

void IvfIndex::add(std::span<const float> data) {
  if (dim_ == 0) fail(ErrorCode::invalid_state, "index is not trained");
  for (auto& l : lists_) l.clear();
  const std::size_t n = data.size() / dim_;
  for (std::size_t i = 0; i < n; ++i) lists_[nearest_centroid(data.data() + i * dim_)].push_back(i);
}

std::size_t IvfIndex::nearest_centroid(const float* vec) const {
  std::size_t best = 0;
  float best_d = std::numeric_limits<float>::infinity();
  for (std::size_t c = 0; c < lists_.size(); ++c) {
    const float d = squared_l2(vec, centroids_.data() + c * dim_, dim_);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

std::vector<std::size_t> IvfIndex::probe_order(const float* query, std::size_t n_probe) const {
  std::vector<std::pair<float, std::size_t>> d(lists_.size());
  for (std::size_t c = 0; c < lists_.size(); ++c) d[c] = {squared_l2(query, centroids_.data() + c * dim_, dim_), c};
  n_probe = std::min(n_probe, d.size());
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(n_probe), d.end());
  std::vector<std::size_t> out(n_probe);
  for (std::size_t i = 0; i < n_probe; ++i) out[i] = d[i].second;
  return out;
}

std::vector<std::pair<float, std::size_t>> IvfIndex::search(std::span<const float> data,
                                                            const float* query, std::size_t k) const {
  std::vector<std::pair<float, std::size_t>> cand;
  for (std::size_t c : probe_order(query, n_probe_)) {
    for (std::size_t id : lists_[c]) cand.emplace_back(squared_l2(query, data.data() + id * dim_, dim_), id);
  }
  const std::size_t keep = std::min(k, cand.size());
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(keep), cand.end());
  cand.resize(keep);
  return cand;
}

void IvfIndex::write(std::ostream& out) const {
  out.write(kIndexMagic.data(), static_cast<std::streamsize>(kIndexMagic.size()));
  std::size_t count = 0;
  for (const auto& l : lists_) count += l.size();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
  put<std::uint64_t>(out, count);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(lists_.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(n_probe_));
  for (float f : centroids_) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  for (const auto& l : lists_) {
    put<std::uint64_t>(out, l.size());
    for (std::size_t id : l) put<std::uint64_t>(out, id);
  }
}

IvfIndex IvfIndex::read(std::istream& in, std::size_t expected_dim, std::size_t expected_count) {
  char magic[6];
  if (!in.read(magic, 6)) fail(ErrorCode::truncated_file, "index file is truncated");
  if (std::string_view(magic, 6) != kIndexMagic) fail(ErrorCode::magic_mismatch, "not an index file");
  IvfIndex idx;
  idx.dim_ = get<std::uint32_t>(in);
  const auto count = get<std::uint64_t>(in);
  const auto n_clusters = get<std::uint32_t>(in);
  idx.n_probe_ = get<std::uint32_t>(in);
  if (idx.dim_ != expected_dim || count != expected_count || n_clusters == 0) {
    fail(ErrorCode::dim_mismatch, "index does not match the store");
  }
  idx.centroids_.resize(static_cast<std::size_t>(n_clusters) * idx.dim_);
  for (float& f : idx.centroids_) f = std::bit_cast<float>(get<std::uint32_t>(in));
  idx.lists_.resize(n_clusters);
  std::size_t seen = 0;
  for (auto& l : idx.lists_) {
    const auto n = get<std::uint64_t>(in);
    if (n > expected_count) fail(ErrorCode::invalid_input, "index list larger than the store");
    l.resize(n);
    for (auto& id : l) {
      id = get<std::uint64_t>(in);
      if (id >= expected_count) fail(ErrorCode::invalid_input, "index entry outside the store");
    }
    seen += n;
  }
  if (seen != expected_count) fail(ErrorCode::invalid_input, "index does not cover every entry");
  return idx;
}

}  // namespace ebgec
