#include <algorithm>
#include <fstream>

#include "support.hpp"

#include "ebgec/datastore.hpp"
#include "ebgec/ivf.hpp"
#include "ebgec/rng.hpp"

using namespace ebgec;
using ebgec::testing::TempDir;

namespace {

// Coordinates are multiples of 1/8 in [-4, 4], so every partial sum of
// squared differences is exact in float and summation order cannot matter.
Datastore grid_store(Rng& rng, std::size_t n, std::size_t dim) {
  Datastore s(dim);
  std::vector<float> key(dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& x : key) x = static_cast<float>(static_cast<int>(uniform_index(rng, 65)) - 32) / 8.0f;
    s.append(key, {static_cast<TokenId>(uniform_index(rng, 50)), static_cast<std::uint32_t>(i / 7),
                   static_cast<std::uint16_t>(i % 7)});
  }
  return s;
}

std::vector<float> grid_query(Rng& rng, std::size_t dim) {
  std::vector<float> q(dim);
  for (auto& x : q) x = static_cast<float>(static_cast<int>(uniform_index(rng, 65)) - 32) / 8.0f;
  return q;
}

// Independent brute force: full sort of (distance, index).
std::vector<std::pair<double, std::size_t>> brute_force(const Datastore& s, const std::vector<float>& q,
                                                        std::size_t k) {
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t i = 0; i < s.size(); ++i) {
    double d = 0.0;
    const auto key = s.key(i);
    for (std::size_t j = 0; j < q.size(); ++j) d += (double(key[j]) - q[j]) * (double(key[j]) - q[j]);
    all.emplace_back(d, i);
  }
  std::sort(all.begin(), all.end());
  all.resize(std::min(k, all.size()));
  return all;
}

}  // namespace

TEST_CASE("squared_l2 agrees with a direct sum") {
  Rng rng(1);
  for (std::size_t dim : {1u, 7u, 8u, 9u, 64u, 67u}) {
    std::vector<float> a(dim), b(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      a[i] = static_cast<float>(uniform(rng, -1, 1));
      b[i] = static_cast<float>(uniform(rng, -1, 1));
    }
    double ref = 0.0;
    for (std::size_t i = 0; i < dim; ++i) ref += (double(a[i]) - b[i]) * (double(a[i]) - b[i]);
    CHECK(squared_l2(a.data(), b.data(), dim) == doctest::Approx(ref).epsilon(1e-5));
  }
}

TEST_CASE("knn_exact equals brute force including tie order") {
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 2000);
    const auto store = grid_store(rng, n, 16);
    for (int q = 0; q < 5; ++q) {
      auto query = grid_query(rng, 16);
      // Half the queries copy a stored key so duplicates and zero distances occur.
      if (q % 2 == 0) {
        const auto key = store.key(uniform_index(rng, n));
        query.assign(key.begin(), key.end());
      }
      const auto got = store.knn_exact(query, 16);
      const auto want = brute_force(store, query, 16);
      REQUIRE(got.size() == want.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].entry == want[i].second);
        CHECK(double(got[i].distance) == want[i].first);
        CHECK(got[i].value == store.value(got[i].entry));
      }
    }
  }
}

TEST_CASE("ties go to the lower entry index") {
  Datastore s(2);
  for (int i = 0; i < 5; ++i) s.append(std::vector<float>{1.0f, 0.0f}, {TokenId(10 + i), 0, 0});
  const auto got = s.knn_exact(std::vector<float>{0.0f, 0.0f}, 3);
  REQUIRE(got.size() == 3);
  CHECK(got[0].entry == 0);
  CHECK(got[1].entry == 1);
  CHECK(got[2].entry == 2);
}

TEST_CASE("batched search equals one query at a time") {
  Rng rng(5);
  const auto store = grid_store(rng, 500, 8);
  std::vector<std::vector<float>> queries;
  for (int i = 0; i < 6; ++i) queries.push_back(grid_query(rng, 8));
  const auto batch = store.knn_exact_batch(queries, 7);
  for (std::size_t i = 0; i < queries.size(); ++i) CHECK(batch[i] == store.knn_exact(queries[i], 7));
}

TEST_CASE("edge cases: empty store, k larger than store, bad inputs") {
  Datastore empty(4);
  CHECK(empty.knn_exact(std::vector<float>(4, 0.0f), 3).empty());
  Datastore s(2);
  s.append(std::vector<float>{0.0f, 1.0f}, {5, 1, 0});
  CHECK(s.knn_exact(std::vector<float>{0.0f, 0.0f}, 10).size() == 1);
  CHECK_THROWS_CODE(s.knn_exact(std::vector<float>{0.0f, 0.0f}, 0), ErrorCode::invalid_config);
  CHECK_THROWS_CODE(s.knn_exact(std::vector<float>{0.0f}, 1), ErrorCode::invalid_input);
  CHECK_THROWS_CODE(s.append(std::vector<float>{1.0f, 2.0f, 3.0f}, {}), ErrorCode::invalid_state);
  CHECK_THROWS_CODE(s.knn_approx(std::vector<float>{0.0f, 0.0f}, 1), ErrorCode::invalid_state);
}

TEST_CASE("store save/load round trip preserves query results exactly") {
  TempDir dir;
  Rng rng(9);
  Datastore s(12);
  std::vector<float> key(12);
  for (int i = 0; i < 300; ++i) {
    for (auto& x : key) x = static_cast<float>(uniform(rng, -1, 1));
    s.append(key, {TokenId(i % 17), std::uint32_t(i / 3), std::uint16_t(i % 3)});
  }
  s.save(dir / "s.bin");
  const Datastore back = Datastore::load(dir / "s.bin");
  REQUIRE(back.size() == s.size());
  CHECK(std::equal(back.keys().begin(), back.keys().end(), s.keys().begin()));
  for (int q = 0; q < 20; ++q) {
    for (auto& x : key) x = static_cast<float>(uniform(rng, -1, 1));
    CHECK(back.knn_exact(key, 16) == s.knn_exact(key, 16));
  }

  CHECK_THROWS_CODE(Datastore::load(dir / "s.bin", kStoreMagic, 13), ErrorCode::dim_mismatch);
  CHECK_THROWS_CODE(Datastore::load(dir / "s.bin", kContextStoreMagic), ErrorCode::magic_mismatch);
  std::filesystem::copy_file(dir / "s.bin", dir / "short.bin");
  std::filesystem::resize_file(dir / "short.bin", std::filesystem::file_size(dir / "s.bin") - 1);
  CHECK_THROWS_CODE(Datastore::load(dir / "short.bin"), ErrorCode::truncated_file);
  {
    std::ofstream out(dir / "s.bin", std::ios::app | std::ios::binary);
    out << "x";
  }
  CHECK_THROWS_CODE(Datastore::load(dir / "s.bin"), ErrorCode::invalid_input);
  CHECK_THROWS_CODE(Datastore::load(dir / "missing.bin"), ErrorCode::io_error);
}

TEST_CASE("store file layout") {
  TempDir dir;
  Datastore s(2);
  s.append(std::vector<float>{1.0f, -2.0f}, {7, 300, 4});
  s.save(dir / "s.bin");
  std::ifstream in(dir / "s.bin", std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), {});
  // magic(6) dim(4) count(8) keys(2*4) value(4+4+2)
  REQUIRE(bytes.size() == 6 + 4 + 8 + 8 + 10);
  CHECK(std::string(bytes.begin(), bytes.begin() + 6) == "EBGEC1");
  CHECK(bytes[6] == 2);
  CHECK(bytes[10] == 1);
  CHECK(bytes[26] == 7);
  CHECK(bytes[30] == 44);  // 300 = 0x012C, little endian
  CHECK(bytes[31] == 1);
  CHECK(bytes[34] == 4);
}

TEST_CASE("IVF index recall on clustered data and persistence") {
  TempDir dir;
  Rng rng(31);
  const std::size_t dim = 32, centers = 40;
  std::vector<std::vector<float>> mu(centers, std::vector<float>(dim));
  for (auto& c : mu) {
    for (auto& x : c) x = static_cast<float>(uniform(rng, -3, 3));
  }
  Datastore s(dim);
  std::vector<float> key(dim);
  for (int i = 0; i < 8000; ++i) {
    const auto& c = mu[uniform_index(rng, centers)];
    for (std::size_t j = 0; j < dim; ++j) key[j] = c[j] + static_cast<float>(uniform(rng, -0.3, 0.3));
    s.append(key, {TokenId(i % 50), std::uint32_t(i), 0});
  }
  s.build_index();
  CHECK(s.index().n_clusters() == 64);
  CHECK(s.index().n_probe() == 8);
  std::size_t covered = 0;
  for (const auto& list : s.index().lists()) covered += list.size();
  CHECK(covered == s.size());

  std::size_t hits = 0, total = 0;
  std::vector<std::vector<float>> queries;
  for (int q = 0; q < 100; ++q) {
    const auto& c = mu[uniform_index(rng, centers)];
    for (std::size_t j = 0; j < dim; ++j) key[j] = c[j] + static_cast<float>(uniform(rng, -0.3, 0.3));
    queries.push_back(key);
    const auto exact = s.knn_exact(key, 16);
    const auto approx = s.knn_approx(key, 16);
    for (const auto& e : exact) {
      ++total;
      for (const auto& a : approx) {
        if (a.entry == e.entry) {
          ++hits;
          break;
        }
      }
    }
  }
  CHECK(static_cast<double>(hits) / static_cast<double>(total) >= 0.95);

  s.save(dir / "s.bin");
  s.save_index(dir / "s.bin.ivf");
  Datastore back = Datastore::load(dir / "s.bin");
  back.load_index(dir / "s.bin.ivf");
  for (const auto& q : queries) CHECK(back.knn_approx(q, 16) == s.knn_approx(q, 16));

  // Probing every list makes the index exact.
  back.set_n_probe(back.index().n_clusters());
  for (const auto& q : queries) CHECK(back.knn_approx(q, 16) == back.knn_exact(q, 16));

  Datastore other(dim);
  other.append(key, {});
  CHECK_THROWS_CODE(other.load_index(dir / "s.bin.ivf"), ErrorCode::dim_mismatch);
}

TEST_CASE("datastore built from pairs has one entry per target token plus EOS") {
  const auto& sys = ebgec::testing::tiny_system();
  std::size_t expected = 0;
  for (const auto& p : sys.train) expected += p.tgt.size() + 1;
  REQUIRE(sys.store->size() == expected);
  CHECK(sys.store->dim() == sys.model->hidden_dim());

  // Keys are the decoder states a teacher-forced decode produces.
  const auto& pair = sys.train[3];
  const TokenSeq src = sys.vocab.encode(pair.src);
  const TokenSeq tgt = sys.vocab.encode(pair.tgt);
  std::size_t first = 0;
  for (std::size_t i = 0; i < 3; ++i) first += sys.train[i].tgt.size() + 1;
  const auto memory = sys.model->encode(src);
  TokenSeq prefix{kBos};
  for (std::size_t t = 0; t <= tgt.size(); ++t) {
    const auto step = sys.model->decode_step(memory, prefix);
    const auto key = sys.store->key(first + t);
    CHECK(std::equal(key.begin(), key.end(), step.state.vector.begin()));
    const auto& v = sys.store->value(first + t);
    CHECK(v.pair_id == pair.pair_id);
    CHECK(v.position == t);
    CHECK(v.token == (t < tgt.size() ? tgt[t] : kEos));
    if (t < tgt.size()) prefix.push_back(tgt[t]);
  }

  Datastore wrong(sys.model->hidden_dim() + 1);
  wrong.append(std::vector<float>(sys.model->hidden_dim() + 1, 0.0f), {});
  CHECK_THROWS_CODE(append_pairs(wrong, *sys.model, sys.train, sys.vocab), ErrorCode::invalid_state);
}
