#include "ebgec/datastore.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "ebgec/corpus.hpp"
#include "ebgec/error.hpp"
#include "ebgec/ivf.hpp"
#include "ebgec/seq2seq.hpp"

namespace ebgec {

float squared_l2(const float* a, const float* b, std::size_t dim) {
  float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= dim; i += 8) {
    for (std::size_t l = 0; l < 8; ++l) {
      const float d = a[i + l] - b[i + l];
      acc[l] += d * d;
    }
  }
  float tail = 0.0f;
  for (; i < dim; ++i) {
    const float d = a[i] - b[i];
    tail += d * d;
  }
  return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail;
}

namespace {

using Candidate = std::pair<float, std::size_t>;

// Bounded max-heap on (distance, entry); entries arrive in increasing index
// order, so an equal distance never displaces an earlier entry.
class TopK {
 public:
  explicit TopK(std::size_t k) : k_(k) { heap_.reserve(k); }

  void offer(float d, std::size_t id) {
    if (k_ == 0) return;
    if (heap_.size() < k_) {
      heap_.emplace_back(d, id);
      std::push_heap(heap_.begin(), heap_.end());
    } else if (Candidate{d, id} < heap_.front()) {
      std::pop_heap(heap_.begin(), heap_.end());
      heap_.back() = {d, id};
      std::push_heap(heap_.begin(), heap_.end());
    }
  }

  std::vector<Candidate> sorted() {
    std::sort_heap(heap_.begin(), heap_.end());
    return std::move(heap_);
  }

 private:
  std::size_t k_;
  std::vector<Candidate> heap_;
};

template <typename U>
void put(std::ostream& out, U v) {
  unsigned char b[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<unsigned char>(static_cast<std::uint64_t>(v) >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), sizeof(U));
}

template <typename U>
U get(std::istream& in, const std::string& what) {
  unsigned char b[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(b), sizeof(U))) fail(ErrorCode::truncated_file, what + " is truncated");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return static_cast<U>(v);
}

}  // namespace

Datastore::Datastore(std::size_t dim) : dim_(dim) {}
Datastore::~Datastore() = default;
Datastore::Datastore(Datastore&&) noexcept = default;
Datastore& Datastore::operator=(Datastore&&) noexcept = default;

std::span<const float> Datastore::key(std::size_t entry) const {
  return std::span<const float>(keys_).subspan(entry * dim_, dim_);
}

void Datastore::append(std::span<const float> key, const EntryValue& value) {
  if (dim_ == 0 && values_.empty()) dim_ = key.size();
  if (key.size() != dim_ || dim_ == 0) {
    fail(ErrorCode::invalid_state, "key dimension " + std::to_string(key.size()) +
                                       " does not match store dimension " + std::to_string(dim_));
  }
  keys_.insert(keys_.end(), key.begin(), key.end());
  values_.push_back(value);
  index_.reset();
}

NeighborSet Datastore::knn_exact(std::span<const float> query, std::size_t k) const {
  std::vector<std::vector<float>> q{std::vector<float>(query.begin(), query.end())};
  return std::move(knn_exact_batch(q, k).front());
}

std::vector<NeighborSet> Datastore::knn_exact_batch(std::span<const std::vector<float>> queries,
                                                    std::size_t k) const {
  if (k == 0) fail(ErrorCode::invalid_config, "k must be >= 1");
  std::vector<NeighborSet> out(queries.size());
  if (values_.empty()) return out;
  for (const auto& q : queries) {
    if (q.size() != dim_) fail(ErrorCode::invalid_input, "query dimension does not match the store");
  }
  std::vector<TopK> tops(queries.size(), TopK(std::min(k, values_.size())));
  const std::size_t n = values_.size();
  for (std::size_t i = 0; i < n; ++i) {
    const float* key = keys_.data() + i * dim_;
    for (std::size_t qi = 0; qi < queries.size(); ++qi) {
      tops[qi].offer(squared_l2(queries[qi].data(), key, dim_), i);
    }
  }
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    for (const auto& [d, id] : tops[qi].sorted()) out[qi].push_back({id, values_[id], d});
  }
  return out;
}

void Datastore::build_index(const IvfOptions& options) {
  auto idx = std::make_unique<IvfIndex>();
  idx->train(keys_, dim_, options.n_clusters, options.iterations, options.seed);
  idx->add(keys_);
  idx->set_n_probe(options.n_probe);
  index_ = std::move(idx);
}

const IvfIndex& Datastore::index() const {
  if (!index_) fail(ErrorCode::invalid_state, "approximate index has not been built");
  return *index_;
}

void Datastore::set_n_probe(std::size_t n_probe) {
  if (!index_) fail(ErrorCode::invalid_state, "approximate index has not been built");
  index_->set_n_probe(n_probe);
}

NeighborSet Datastore::knn_approx(std::span<const float> query, std::size_t k) const {
  if (!index_) fail(ErrorCode::invalid_state, "approximate index has not been built");
  if (k == 0) fail(ErrorCode::invalid_config, "k must be >= 1");
  if (query.size() != dim_) fail(ErrorCode::invalid_input, "query dimension does not match the store");
  NeighborSet out;
  for (const auto& [d, id] : index_->search(keys_, query.data(), k)) out.push_back({id, values_[id], d});
  return out;
}

void Datastore::save(const std::filesystem::path& path, std::string_view magic) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io_error, "cannot write store " + path.string());
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
  put<std::uint64_t>(out, values_.size());
  for (float f : keys_) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  for (const auto& v : values_) {
    put<std::uint32_t>(out, v.token);
    put<std::uint32_t>(out, v.pair_id);
    put<std::uint16_t>(out, v.position);
  }
  if (!out) fail(ErrorCode::io_error, "write failed for " + path.string());
}

Datastore Datastore::load(const std::filesystem::path& path, std::string_view magic,
                          std::size_t expected_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io_error, "cannot read store " + path.string());
  const std::string what = path.string();
  std::string header(magic.size(), '\0');
  if (!in.read(header.data(), static_cast<std::streamsize>(header.size()))) {
    fail(ErrorCode::truncated_file, what + " is truncated");
  }
  if (header != magic) fail(ErrorCode::magic_mismatch, what + ": expected magic " + std::string(magic));
  const auto dim = get<std::uint32_t>(in, what);
  const auto count = get<std::uint64_t>(in, what);
  if ((dim == 0 && count > 0) || (expected_dim != 0 && count > 0 && dim != expected_dim)) {
    fail(ErrorCode::dim_mismatch, what + ": store dimension " + std::to_string(dim) +
                                      " does not match expected " + std::to_string(expected_dim));
  }
  // Size check before allocating so a corrupt count cannot trigger a huge allocation.
  const auto here = in.tellg();
  in.seekg(0, std::ios::end);
  const auto remaining = static_cast<std::uint64_t>(in.tellg() - here);
  in.seekg(here);
  const std::uint64_t need = count * (static_cast<std::uint64_t>(dim) * 4 + 10);
  if (remaining < need) fail(ErrorCode::truncated_file, what + " is truncated");
  if (remaining > need) fail(ErrorCode::invalid_input, what + ": trailing bytes after entries");

  Datastore s(dim);
  s.keys_.resize(static_cast<std::size_t>(count) * dim);
  for (float& f : s.keys_) f = std::bit_cast<float>(get<std::uint32_t>(in, what));
  s.values_.resize(static_cast<std::size_t>(count));
  for (auto& v : s.values_) {
    v.token = get<std::uint32_t>(in, what);
    v.pair_id = get<std::uint32_t>(in, what);
    v.position = get<std::uint16_t>(in, what);
  }
  return s;
}

void Datastore::save_index(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io_error, "cannot write index " + path.string());
  index().write(out);
}

void Datastore::load_index(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io_error, "cannot read index " + path.string());
  index_ = std::make_unique<IvfIndex>(IvfIndex::read(in, dim_, values_.size()));
}

void append_pairs(Datastore& store, const Seq2Seq& model, const std::vector<SentencePair>& pairs,
                  const Vocab& vocab) {
  if (!store.empty() && store.dim() != model.hidden_dim()) {
    fail(ErrorCode::invalid_state, "store dimension " + std::to_string(store.dim()) +
                                       " differs from model hidden size " +
                                       std::to_string(model.hidden_dim()));
  }
  for (const auto& pair : pairs) {
    const TokenSeq src = vocab.encode(pair.src);
    const TokenSeq tgt = vocab.encode(pair.tgt);
    if (tgt.size() >= 0xFFFF) fail(ErrorCode::invalid_input, "target too long for the store");
    const EncoderMemory memory = model.encode(src);
    TokenSeq prefix{kBos};
    for (std::size_t i = 0; i <= tgt.size(); ++i) {
      const StepOutput step = model.decode_step(memory, prefix);
      const TokenId token = i < tgt.size() ? tgt[i] : kEos;
      store.append(step.state.vector, {token, pair.pair_id, static_cast<std::uint16_t>(i)});
      prefix.push_back(token);
    }
  }
}

Datastore build_datastore(const Seq2Seq& model, const std::vector<SentencePair>& pairs,
                          const Vocab& vocab) {
  Datastore store(model.hidden_dim());
  append_pairs(store, model, pairs, vocab);
  return store;
}

}  // namespace ebgec
