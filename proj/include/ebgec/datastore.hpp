#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "ebgec/vocab.hpp"

namespace ebgec {

class Seq2Seq;
struct SentencePair;
class IvfIndex;

struct EntryValue {
  TokenId token = 0;
  std::uint32_t pair_id = 0;
  std::uint16_t position = 0;  // target index; == target length for the EOS step
  friend bool operator==(const EntryValue&, const EntryValue&) = default;
};

struct Neighbor {
  std::size_t entry = 0;
  EntryValue value;
  float distance = 0.0f;  // squared L2
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

// Sorted by (distance, entry) ascending.
using NeighborSet = std::vector<Neighbor>;

float squared_l2(const float* a, const float* b, std::size_t dim);

struct IvfOptions {
  std::size_t n_clusters = 64;
  std::size_t n_probe = 8;
  int iterations = 20;
  std::uint64_t seed = 1234;
};

inline constexpr std::string_view kStoreMagic = "EBGEC1";
inline constexpr std::string_view kContextStoreMagic = "EBCTX1";
inline constexpr std::string_view kIndexMagic = "EBIVF1";

// Dense key/value store of decoder states. Immutable once built or loaded;
// queries are const and safe from many threads.
class Datastore {
 public:
  explicit Datastore(std::size_t dim = 0);
  ~Datastore();
  Datastore(Datastore&&) noexcept;
  Datastore& operator=(Datastore&&) noexcept;
  Datastore(const Datastore&) = delete;
  Datastore& operator=(const Datastore&) = delete;

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  std::span<const float> key(std::size_t entry) const;
  const EntryValue& value(std::size_t entry) const { return values_[entry]; }
  std::span<const float> keys() const noexcept { return keys_; }

  // Throws invalid_state on a dimension mismatch. Drops any built index.
  void append(std::span<const float> key, const EntryValue& value);

  // Full scan; ties at equal distance go to the lower entry index.
  NeighborSet knn_exact(std::span<const float> query, std::size_t k) const;
  // One pass over the keys for several queries.
  std::vector<NeighborSet> knn_exact_batch(std::span<const std::vector<float>> queries,
                                           std::size_t k) const;

  void build_index(const IvfOptions& options = {});
  bool has_index() const noexcept { return index_ != nullptr; }
  const IvfIndex& index() const;
  void set_n_probe(std::size_t n_probe);

  // Probes the index's nearest clusters; throws invalid_state without an index.
  NeighborSet knn_approx(std::span<const float> query, std::size_t k) const;

  void save(const std::filesystem::path& path, std::string_view magic = kStoreMagic) const;
  // expected_dim = 0 accepts any dimension.
  static Datastore load(const std::filesystem::path& path, std::string_view magic = kStoreMagic,
                        std::size_t expected_dim = 0);
  void save_index(const std::filesystem::path& path) const;
  void load_index(const std::filesystem::path& path);

 private:
  std::size_t dim_ = 0;
  std::vector<float> keys_;
  std::vector<EntryValue> values_;
  std::unique_ptr<IvfIndex> index_;
};

// Teacher-forces every pair through the model and appends one entry per
// target step, EOS included. Throws invalid_state if store.dim() differs
// from the model's hidden size on a non-empty store.
void append_pairs(Datastore& store, const Seq2Seq& model, const std::vector<SentencePair>& pairs,
                  const Vocab& vocab);
Datastore build_datastore(const Seq2Seq& model, const std::vector<SentencePair>& pairs,
                          const Vocab& vocab);

}  // namespace ebgec
