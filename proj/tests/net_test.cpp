#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <utility>

#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "hloc/error.hpp"
#include "hloc/net.hpp"
#include "hloc/train.hpp"
#include "oracles.hpp"

namespace hloc {
namespace {

using net::Mode;
using net::NetConfig;
using net::NetworkParams;

// Counted from the tensor shapes of the default configuration:
//   input projection 6x16+16, positional encoding 160x16, pre-norm 2x16,
//   one encoder layer (4 x (16x16+16) + 2 x 2x16 + 16x8+8 + 8x16+16),
//   batch-norm 2x16, dense head 16x256+256.
constexpr std::int64_t kDefaultParamCount = 112 + 2560 + 32 + 1432 + 32 + 4352;

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("hloc_net_test_" + name);
}

std::vector<HapticSignal> random_batch(std::mt19937_64& rng, const NetConfig& cfg, int n) {
  std::vector<HapticSignal> batch;
  for (int i = 0; i < n; ++i) {
    batch.push_back(testing::random_signal(rng, cfg.seq_len, cfg.in_dim, 20.0));
  }
  return batch;
}

TEST(ParamCount, DefaultConfigIsFrozenRegressionValue) {
  EXPECT_EQ(kDefaultParamCount, 8520);
  EXPECT_EQ(net::param_count(NetConfig{}), kDefaultParamCount);
  EXPECT_EQ(net::param_count(net::init_params(NetConfig{})), kDefaultParamCount);
}

TEST(ParamCount, OnlyDenseHeadDependsOnEmbedDim) {
  NetConfig small;
  small.embed_dim = 3;
  EXPECT_EQ(net::param_count(small),
            kDefaultParamCount - (16 * 256 + 256) + (16 * 3 + 3));
}

TEST(ParamCount, LayersAreAdditive) {
  NetConfig two;
  two.n_encoder_layers = 2;
  EXPECT_EQ(net::param_count(two) - net::param_count(NetConfig{}),
            net::encoder_layer_param_count(NetConfig{}));
  EXPECT_EQ(net::param_count(net::init_params(two)), net::param_count(two));
}

TEST(NetConfig, RejectsIndivisibleHeads) {
  NetConfig c;
  c.n_heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = NetConfig{};
  c.embed_dim = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(InitParams, DeterministicPerSeed) {
  NetConfig c;
  c.seed = 7;
  const NetworkParams a = net::init_params(c);
  const NetworkParams b = net::init_params(c);
  EXPECT_EQ(net::fingerprint(a), net::fingerprint(b));
  bool identical = true;
  net::for_each_tensor_pair(a, b, [&](const std::string&, const auto& x, const auto& y,
                                      net::TensorRole) { identical &= (x == y); });
  EXPECT_TRUE(identical);

  c.seed = 8;
  const NetworkParams d = net::init_params(c);
  bool any_diff = false;
  net::for_each_tensor_pair(a, d, [&](const std::string&, const auto& x, const auto& y,
                                      net::TensorRole) { any_diff |= !(x == y); });
  EXPECT_TRUE(any_diff);
}

TEST(InitParams, NormalizationDefaults) {
  const NetworkParams p = net::init_params(NetConfig{});
  EXPECT_TRUE((p.running_var.array() == 1.0).all());
  EXPECT_TRUE((p.running_mean.array() == 0.0).all());
  EXPECT_TRUE((p.pre_norm.gain.array() == 1.0).all());
  EXPECT_TRUE((p.head_norm.bias.array() == 0.0).all());
  const double limit = std::sqrt(6.0 / (16 + 256));
  EXPECT_LE(p.head_dense.weight.cwiseAbs().maxCoeff(), limit);
}

TEST(Forward, EmbeddingsAreNonNegative) {
  std::mt19937_64 rng(1);
  NetConfig c;
  c.embed_dim = 32;
  NetworkParams p = net::init_params(c);
  const auto batch = random_batch(rng, c, 6);
  const auto train = net::forward(p, batch, Mode::kTrain);
  EXPECT_GE(train.embeddings.minCoeff(), 0.0);
  const auto infer = net::embed(p, batch);
  EXPECT_GE(infer.minCoeff(), 0.0);
  EXPECT_EQ(infer.rows(), 6);
  EXPECT_EQ(infer.cols(), 32);
}

TEST(Forward, InferIsBatchIndependent) {
  std::mt19937_64 rng(2);
  NetConfig c;
  c.embed_dim = 8;
  NetworkParams p = net::init_params(c);
  net::forward(p, random_batch(rng, c, 8), Mode::kTrain);  // non-trivial running stats
  const auto batch = random_batch(rng, c, 32);
  const Eigen::MatrixXd together = net::embed(p, batch);
  for (int i : {0, 13, 31}) {
    const Eigen::VectorXd alone = net::embed(p, batch[i]);
    EXPECT_LE((alone.transpose() - together.row(i)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Forward, InferIsDeterministicAndDoesNotMutate) {
  std::mt19937_64 rng(3);
  const NetConfig c;
  const NetworkParams p = net::init_params(c);
  const auto batch = random_batch(rng, c, 3);
  const NetworkParams before = p;
  const Eigen::MatrixXd a = net::embed(p, batch);
  const Eigen::MatrixXd b = net::embed(p, batch);
  EXPECT_TRUE(a == b);
  EXPECT_EQ(net::fingerprint(p), net::fingerprint(before));
  EXPECT_TRUE(p.running_mean == before.running_mean);
  EXPECT_TRUE(p.running_var == before.running_var);
}

TEST(Forward, TrainModeUpdatesRunningStatistics) {
  std::mt19937_64 rng(4);
  NetConfig c;
  c.embed_dim = 4;
  NetworkParams p = net::init_params(c);
  const auto batch = random_batch(rng, c, 5);
  const auto result = net::forward(p, batch, Mode::kTrain);
  Eigen::MatrixXd pooled(5, c.d_model);
  for (int i = 0; i < 5; ++i) pooled.row(i) = result.cache.samples[i].pooled;
  const Eigen::RowVectorXd mean = pooled.colwise().mean();
  const Eigen::RowVectorXd var_unbiased =
      (pooled.rowwise() - mean).array().square().colwise().sum().matrix() / 4.0;
  EXPECT_LE((p.running_mean - 0.1 * mean).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((p.running_var - (0.9 * Eigen::RowVectorXd::Ones(c.d_model) + 0.1 * var_unbiased))
                .cwiseAbs()
                .maxCoeff(),
            1e-12);
}

TEST(Forward, RejectsBadShapesAndSingletonTrainBatch) {
  std::mt19937_64 rng(5);
  NetworkParams p = net::init_params(NetConfig{});
  std::vector<HapticSignal> bad = {testing::random_signal(rng, 159, 6)};
  EXPECT_THROW(net::embed(p, bad), InvariantError);
  std::vector<HapticSignal> one = {testing::random_signal(rng)};
  EXPECT_THROW(net::forward(p, one, Mode::kTrain), InvariantError);
  EXPECT_NO_THROW(net::embed(p, one));
}

TEST(Forward, AttentionRowsAreDistributions) {
  std::mt19937_64 rng(6);
  NetConfig c;
  c.n_encoder_layers = 2;
  NetworkParams p = net::init_params(c);
  const auto result = net::forward(p, random_batch(rng, c, 3), Mode::kTrain);
  for (const auto& sc : result.cache.samples) {
    for (const auto& lc : sc.layers) {
      ASSERT_EQ(lc.attention.size(), 2u);
      for (const auto& a : lc.attention) {
        EXPECT_GE(a.minCoeff(), 0.0);
        EXPECT_LE((a.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-6);
      }
    }
  }
}

// With every projection inside the encoder zeroed, attention adds nothing
// and the feed-forward branch adds nothing, so each post-norm layer reduces
// to two layer norms applied to its input. The pooled output must equal the
// time-average of exactly that, computed here without the network code.
TEST(Forward, PoolingWhiteBoxWithZeroedEncoder) {
  std::mt19937_64 rng(7);
  NetConfig c;
  c.embed_dim = 5;
  NetworkParams p = net::init_params(c);
  for (auto& layer : p.layers) {
    for (net::Linear* l : {&layer.query, &layer.key, &layer.value, &layer.output,
                           &layer.ff_inner, &layer.ff_outer}) {
      l->weight.setZero();
      l->bias.setZero();
    }
  }
  const auto batch = random_batch(rng, c, 2);
  const auto result = net::forward(p, batch, Mode::kTrain);

  auto layer_norm = [](Eigen::MatrixXd x) {
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const double mean = x.row(r).mean();
      const double var = (x.row(r).array() - mean).square().mean();
      x.row(r) = (x.row(r).array() - mean) / std::sqrt(var + net::kNormEpsilon);
    }
    return x;
  };
  for (int i = 0; i < 2; ++i) {
    Eigen::MatrixXd proj = batch[i].samples * p.input_proj.weight;
    proj.rowwise() += p.input_proj.bias;
    const Eigen::MatrixXd augmented = layer_norm(proj) + p.pos_encoding;
    const Eigen::RowVectorXd expected =
        layer_norm(layer_norm(augmented)).colwise().mean();
    EXPECT_LE((result.cache.samples[i].pooled - expected).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  std::mt19937_64 rng(8);
  NetConfig c;
  c.embed_dim = 6;
  NetworkParams p = net::init_params(c);
  const auto fwd = net::forward(p, random_batch(rng, c, 4), Mode::kTrain);
  const auto g = net::backward(p, fwd.cache, Eigen::MatrixXd::Zero(4, 6));
  double max_abs = 0.0;
  net::for_each_tensor(g, [&](const std::string&, const auto& t, net::TensorRole) {
    max_abs = std::max(max_abs, t.cwiseAbs().maxCoeff());
  });
  EXPECT_EQ(max_abs, 0.0);
}

TEST(Backward, RejectsStaleCacheAndInferCache) {
  std::mt19937_64 rng(9);
  NetConfig c;
  c.embed_dim = 6;
  NetworkParams p = net::init_params(c);
  const auto batch = random_batch(rng, c, 4);
  const auto fwd = net::forward(p, batch, Mode::kTrain);
  NetworkParams mutated = p;
  mutated.head_dense.weight(0, 0) += 1e-3;
  EXPECT_THROW(net::backward(mutated, fwd.cache, Eigen::MatrixXd::Ones(4, 6)), InvariantError);
  const auto inf = net::forward(std::as_const(p), batch);
  EXPECT_THROW(net::backward(p, inf.cache, Eigen::MatrixXd::Ones(4, 6)), InvariantError);
  EXPECT_THROW(net::backward(p, fwd.cache, Eigen::MatrixXd::Ones(3, 6)), InvariantError);
}

TEST(Backward, MatchesCentralFiniteDifferences) {
  int checked = 0;
  for (std::uint64_t seed = 100; checked < 20 && seed < 200; ++seed) {
    const auto r = testing::check_network_gradients(seed);
    if (!r.usable) continue;
    ++checked;
    EXPECT_EQ(r.n_params, net::param_count(testing::tiny_config(seed)));
    EXPECT_LT(r.max_rel_error, 1e-4) << "seed " << seed << " worst " << r.worst_tensor;
  }
  EXPECT_EQ(checked, 20);
}

TEST(Backward, PermutationOfBatchPermutesNothingButOrder) {
  std::mt19937_64 rng(10);
  NetConfig c = testing::tiny_config(10);
  c.seq_len = 12;
  NetworkParams p = net::init_params(c);
  testing::randomize(p, rng);
  const auto batch = random_batch(rng, c, 6);
  std::vector<Eigen::Vector3d> pos;
  for (int i = 0; i < 6; ++i) pos.emplace_back(0.2 * i, 0.0, 0.0);

  std::vector<int> perm(6);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<HapticSignal> pbatch;
  std::vector<Eigen::Vector3d> ppos;
  for (int i : perm) {
    pbatch.push_back(batch[i]);
    ppos.push_back(pos[i]);
  }

  NetworkParams p1 = p, p2 = p;
  const auto f1 = net::forward(p1, batch, Mode::kTrain);
  const auto f2 = net::forward(p2, pbatch, Mode::kTrain);
  const auto l1 = train::batch_all_loss(f1.embeddings, train::mine(pos, 0.25), 1.0);
  const auto l2 = train::batch_all_loss(f2.embeddings, train::mine(ppos, 0.25), 1.0);
  EXPECT_NEAR(l1.loss, l2.loss, 1e-12);
  for (int k = 0; k < 6; ++k) {
    EXPECT_LE((f2.embeddings.row(k) - f1.embeddings.row(perm[k])).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((l2.d_embeddings.row(k) - l1.d_embeddings.row(perm[k])).cwiseAbs().maxCoeff(),
              1e-12);
  }
  const auto g1 = net::backward(p, f1.cache, l1.d_embeddings);
  const auto g2 = net::backward(p, f2.cache, l2.d_embeddings);
  net::for_each_tensor_pair(g1, g2, [&](const std::string& name, const auto& a,
                                        const auto& b, net::TensorRole) {
    EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-10 * (1.0 + a.cwiseAbs().maxCoeff())) << name;
  });
}

TEST(ParamsIo, RoundTripIsExact) {
  std::mt19937_64 rng(11);
  NetConfig c;
  c.embed_dim = 12;
  c.n_encoder_layers = 2;
  c.seed = 99;
  NetworkParams p = net::init_params(c);
  net::forward(p, random_batch(rng, c, 4), Mode::kTrain);
  const auto path = temp_path("roundtrip.stnet");
  net::save_params(p, path);
  const NetworkParams q = net::load_params(path);
  EXPECT_EQ(q.config, p.config);
  EXPECT_EQ(net::fingerprint(q), net::fingerprint(p));
  EXPECT_TRUE(q.running_mean == p.running_mean);
  EXPECT_TRUE(q.running_var == p.running_var);
  const auto batch = random_batch(rng, c, 3);
  EXPECT_TRUE(net::embed(p, batch) == net::embed(q, batch));
  std::size_t tensors = 2;
  net::for_each_tensor(p, [&](const std::string&, const auto&, net::TensorRole) { ++tensors; });
  const std::size_t values = static_cast<std::size_t>(net::param_count(c)) + 2 * 16;
  EXPECT_EQ(std::filesystem::file_size(path), 52 + tensors * 8 + values * 8);
}

TEST(ParamsIo, RejectsConfigMismatchAndTruncation) {
  NetConfig c;
  c.embed_dim = 4;
  const NetworkParams p = net::init_params(c);
  const auto path = temp_path("mismatch.stnet");
  net::save_params(p, path);
  NetConfig expected = c;
  expected.embed_dim = 8;
  EXPECT_THROW(net::load_params(path, expected), ConfigError);
  EXPECT_NO_THROW(net::load_params(path, c));

  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 5);
  EXPECT_THROW(net::load_params(path), ParseError);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << "not a parameter file";
  }
  EXPECT_THROW(net::load_params(path), ParseError);
  EXPECT_THROW(net::load_params(temp_path("does_not_exist.stnet")), IoError);
}

}  // namespace
}  // namespace hloc
