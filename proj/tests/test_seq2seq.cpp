#include <fstream>
#include <numeric>

#include "support.hpp"

#include "ebgec/seq2seq.hpp"

using namespace ebgec;
using ebgec::testing::TempDir;

namespace {

EncodedPair tiny_pair() { return {{4, 5, 6, 7}, {4, 8, 6, 7, 9}}; }

}  // namespace

TEST_CASE("analytic gradients match central differences in double precision") {
  const ModelDims dims{12, 5, 6};
  const auto params = init_params(dims, 21).cast<double>();
  const auto result = loss_gradient_check(params, tiny_pair(), params.parameter_count(), 3);
  CHECK(result.checked == params.parameter_count());
  CHECK(result.max_relative_error < 1e-3);
}

TEST_CASE("gradient check covers every tensor when sampling") {
  const ModelDims dims{40, 8, 10};
  const auto params = init_params(dims, 5).cast<double>();
  const auto result = loss_gradient_check(params, tiny_pair(), 300, 9);
  // At most ceil(300 / tensors) draws per tensor, capped by tensor size.
  CHECK(result.checked <= 300);
  CHECK(result.checked >= 200);
  CHECK(result.max_relative_error < 1e-3);
}

TEST_CASE("decode_step yields a normalized distribution and a hidden-size state") {
  const ModelDims dims{15, 6, 8};
  const Seq2Seq model(init_params(dims, 1));
  const TokenSeq src{4, 5, 6};
  const auto memory = model.encode(src);
  CHECK(memory.length() == src.size() + 2);
  const TokenSeq prefix{kBos, 7, 8};
  const auto step = model.decode_step(memory, prefix);
  CHECK(step.state.vector.size() == 8);
  CHECK(step.state.step == 2);
  CHECK(step.probs.size() == 15);
  CHECK(std::accumulate(step.probs.begin(), step.probs.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_CODE(model.encode(TokenSeq{}), ErrorCode::invalid_input);
  CHECK_THROWS_CODE(model.decode_step(memory, TokenSeq{7}), ErrorCode::invalid_input);
}

TEST_CASE("training is deterministic and lowers the loss") {
  const auto& sys = ebgec::testing::tiny_system();
  TrainOptions opt;
  opt.epochs = 2;
  opt.rng_seed = 3;
  TrainReport r1, r2;
  const std::vector<SentencePair> subset(sys.train.begin(), sys.train.begin() + 100);
  const auto p1 = train(subset, sys.vocab, ModelDims{0, 8, 12}, opt, &r1);
  const auto p2 = train(subset, sys.vocab, ModelDims{0, 8, 12}, opt, &r2);
  REQUIRE(r1.epoch_loss.size() == 2);
  CHECK(r1.epoch_loss == r2.epoch_loss);
  CHECK(p1.out_w == p2.out_w);
  CHECK(p1.src_emb == p2.src_emb);
  CHECK(r1.epoch_loss[1] < r1.epoch_loss[0]);

  opt.epochs = 0;
  const auto untrained = train(subset, sys.vocab, ModelDims{0, 8, 12}, opt);
  const auto init = init_params(ModelDims{static_cast<int>(sys.vocab.size()), 8, 12}, opt.rng_seed);
  CHECK(untrained.out_w == init.out_w);
}

TEST_CASE("the tiny fixture model learns the training data") {
  const auto& sys = ebgec::testing::tiny_system();
  CHECK(teacher_forced_accuracy(*sys.model, encode_pairs(sys.train, sys.vocab)) > 0.6);
}

TEST_CASE("divergent training is reported") {
  const auto& sys = ebgec::testing::tiny_system();
  TrainOptions opt;
  opt.epochs = 3;
  opt.learning_rate = 1e38;
  opt.clip_norm = 1e38;
  const std::vector<SentencePair> subset(sys.train.begin(), sys.train.begin() + 40);
  CHECK_THROWS_CODE(train(subset, sys.vocab, ModelDims{0, 8, 12}, opt), ErrorCode::training_diverged);
}

TEST_CASE("checkpoint round trip and corruption detection") {
  TempDir dir;
  const ModelDims dims{20, 6, 8};
  const auto params = init_params(dims, 4);
  save_checkpoint(dir / "m.bin", params);
  const auto back = load_checkpoint(dir / "m.bin");
  CHECK(back.dims == dims);
  for (std::size_t i = 0; i < params.parameter_count(); ++i) {
    if (back.at(i) != params.at(i)) {
      FAIL("weight " << i << " differs after reload");
    }
  }
  CHECK_THROWS_CODE(load_checkpoint(dir / "m.bin", ModelDims{21, 6, 8}), ErrorCode::dim_mismatch);

  const auto size = std::filesystem::file_size(dir / "m.bin");
  std::filesystem::copy_file(dir / "m.bin", dir / "short.bin");
  std::filesystem::resize_file(dir / "short.bin", size - 3);
  CHECK_THROWS_CODE(load_checkpoint(dir / "short.bin"), ErrorCode::truncated_file);

  {
    std::fstream f(dir / "m.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
  }
  CHECK_THROWS_CODE(load_checkpoint(dir / "m.bin"), ErrorCode::magic_mismatch);
}
