#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "hloc/error.hpp"
#include "hloc/net.hpp"
#include "hloc/train.hpp"
#include "oracles.hpp"

namespace hloc {
namespace {

using train::MinedBatch;

std::vector<Eigen::Vector3d> random_positions(std::mt19937_64& rng, int n, double extent) {
  std::uniform_real_distribution<double> u(0.0, extent);
  std::vector<Eigen::Vector3d> pos;
  for (int i = 0; i < n; ++i) pos.emplace_back(u(rng), u(rng), 0.1 * u(rng));
  return pos;
}

Eigen::MatrixXd random_embeddings(std::mt19937_64& rng, int n, int dim) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd e(n, dim);
  for (Eigen::Index i = 0; i < e.size(); ++i) e.data()[i] = g(rng);
  return e;
}

TEST(Mine, FourPointExample) {
  const std::vector<Eigen::Vector3d> pos = {{0, 0, 0}, {0.10, 0, 0}, {1, 0, 0}};
  const MinedBatch m = train::mine(pos, 0.25);
  EXPECT_EQ(m.positives[0], std::vector<int>{1});
  EXPECT_EQ(m.negatives[0], std::vector<int>{2});
  EXPECT_EQ(m.positives[2], std::vector<int>{});
  EXPECT_EQ(m.negatives[2], (std::vector<int>{0, 1}));
}

TEST(Mine, ExactThresholdIsPositive) {
  const std::vector<Eigen::Vector3d> pos = {{0, 0, 0}, {0.25, 0, 0}, {0, 0.5, 0}};
  const MinedBatch m = train::mine(pos, 0.25);
  EXPECT_EQ(m.positives[0], std::vector<int>{1});
  EXPECT_EQ(m.negatives[0], std::vector<int>{2});
  const MinedBatch z = train::mine(pos, 0.5);
  EXPECT_EQ(z.positives[0], (std::vector<int>{1, 2}));
}

TEST(Mine, IdenticalPositionsHaveNoNegatives) {
  const std::vector<Eigen::Vector3d> pos(5, Eigen::Vector3d(1, 2, 3));
  const MinedBatch m = train::mine(pos, 0.25);
  for (int a = 0; a < 5; ++a) {
    EXPECT_TRUE(m.negatives[a].empty());
    EXPECT_EQ(m.positives[a].size(), 4u);
  }
}

TEST(Mine, PartitionPropertyFuzz) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 20);
    auto pos = random_positions(rng, n, 1.0);
    // Force some pairs to sit exactly on the threshold along an axis.
    pos[1] = pos[0] + Eigen::Vector3d(0.25, 0, 0);
    const MinedBatch m = train::mine(pos, 0.25);
    ASSERT_EQ(m.size(), static_cast<std::size_t>(n));
    for (int a = 0; a < n; ++a) {
      std::vector<int> seen(n, 0);
      for (int p : m.positives[a]) {
        ++seen[p];
        EXPECT_LE((pos[a] - pos[p]).norm(), 0.25);
      }
      for (int q : m.negatives[a]) {
        ++seen[q];
        EXPECT_GT((pos[a] - pos[q]).norm(), 0.25);
      }
      EXPECT_EQ(seen[a], 0);
      for (int i = 0; i < n; ++i) {
        if (i != a) EXPECT_EQ(seen[i], 1);
      }
    }
  }
}

TEST(BatchAllLoss, SeparatedClustersGiveZero) {
  const std::vector<Eigen::Vector3d> pos = {{0, 0, 0}, {0.1, 0, 0}, {5, 0, 0}, {5.1, 0, 0}};
  Eigen::MatrixXd e(4, 2);
  e << 0, 0, 0, 0, 10, 0, 10, 0;
  const auto l = train::batch_all_loss(e, train::mine(pos, 0.25), 0.2);
  EXPECT_EQ(l.loss, 0.0);
  EXPECT_EQ(l.active_triplets, 0);
  EXPECT_EQ(l.d_embeddings.cwiseAbs().maxCoeff(), 0.0);
}

TEST(BatchAllLoss, SingleTripletHandValue) {
  MinedBatch m;
  m.positives = {{1}, {}, {}};
  m.negatives = {{2}, {}, {}};
  Eigen::MatrixXd e(3, 2);
  e << 0, 0, 2, 0, -1, 0;
  const auto l = train::batch_all_loss(e, m, 0.5);
  EXPECT_DOUBLE_EQ(l.loss, 1.5);
  EXPECT_EQ(l.active_triplets, 1);
  EXPECT_EQ(l.total_triplets, 1);
  // d/de_a of ||a-p|| - ||a-n|| = (a-p)/|a-p| - (a-n)/|a-n| = (-1,0) - (1,0)
  EXPECT_DOUBLE_EQ(l.d_embeddings(0, 0), -2.0);
  EXPECT_DOUBLE_EQ(l.d_embeddings(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(l.d_embeddings(2, 0), 1.0);
}

TEST(BatchAllLoss, MatchesNaiveTripleLoop) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 15);
    const auto pos = random_positions(rng, n, 0.6);
    const Eigen::MatrixXd e = random_embeddings(rng, n, 1 + static_cast<int>(rng() % 5));
    const double margin = std::uniform_real_distribution<double>(0.0, 2.0)(rng);
    const auto fast = train::batch_all_loss(e, train::mine(pos, 0.25), margin);
    const auto slow = testing::naive_batch_all(e, pos, 0.25, margin);
    EXPECT_NEAR(fast.loss, slow.loss, 1e-12);
    EXPECT_EQ(fast.active_triplets, slow.active);
  }
}

TEST(BatchAllLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  int checked = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto pos = random_positions(rng, 12, 0.6);
    Eigen::MatrixXd e = random_embeddings(rng, 12, 4);
    const MinedBatch mined = train::mine(pos, 0.25);
    const auto l = train::batch_all_loss(e, mined, 0.5);
    if (l.active_triplets == 0) continue;
    // Skip draws with a hinge term within 1e-3 of its kink.
    bool near_kink = false;
    for (int a = 0; a < 12; ++a) {
      for (int p : mined.positives[a]) {
        for (int q : mined.negatives[a]) {
          const double h = (e.row(a) - e.row(p)).norm() - (e.row(a) - e.row(q)).norm() + 0.5;
          near_kink |= std::abs(h) < 1e-3;
        }
      }
    }
    if (near_kink) continue;
    ++checked;
    for (Eigen::Index i = 0; i < e.size(); ++i) {
      const double x0 = e.data()[i];
      const double numeric = testing::central_difference(
          [&](double x) {
            Eigen::MatrixXd f = e;
            f.data()[i] = x;
            return train::batch_all_loss(f, mined, 0.5).loss;
          },
          x0, 1e-6);
      EXPECT_NEAR(l.d_embeddings.data()[i], numeric, 1e-6);
    }
  }
  EXPECT_GE(checked, 10);
}

TEST(BatchAllLoss, NonNegativeAndZeroIffInactive) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 10);
    const auto pos = random_positions(rng, n, 0.6);
    const Eigen::MatrixXd e = random_embeddings(rng, n, 3);
    const auto l = train::batch_all_loss(e, train::mine(pos, 0.25), 0.3);
    EXPECT_GE(l.loss, 0.0);
    EXPECT_EQ(l.loss == 0.0, l.active_triplets == 0);
  }
}

// The averaged loss can drop when a larger margin activates a new, small
// hinge term, so monotonicity is asserted on the hinge sum it normalizes.
TEST(BatchAllLoss, HingeSumMonotoneInMargin) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 10);
    const auto pos = random_positions(rng, n, 0.6);
    const Eigen::MatrixXd e = random_embeddings(rng, n, 3);
    const MinedBatch mined = train::mine(pos, 0.25);
    double prev = 0.0;
    for (double m = 0.0; m <= 2.0; m += 0.25) {
      const auto l = train::batch_all_loss(e, mined, m);
      const double sum = l.loss * static_cast<double>(l.active_triplets);
      EXPECT_GE(sum, prev - 1e-12);
      prev = sum;
    }
  }
}

TEST(BatchAllLoss, ZeroDistanceHasZeroSubgradient) {
  MinedBatch m;
  m.positives = {{1}, {0}, {}};
  m.negatives = {{2}, {2}, {0, 1}};
  Eigen::MatrixXd e(3, 2);
  e << 1, 1, 1, 1, 1.1, 1;
  const auto l = train::batch_all_loss(e, m, 0.5);
  EXPECT_TRUE(l.d_embeddings.allFinite());
  EXPECT_GT(l.active_triplets, 0);
}

TEST(Schedule, LearningRateDecaysHundredfold) {
  train::TrainConfig c;
  c.epochs = 50;
  EXPECT_DOUBLE_EQ(train::learning_rate(c, 0), c.lr0);
  EXPECT_NEAR(train::learning_rate(c, 50), c.lr0 * 0.01, 1e-18);
  EXPECT_NEAR(train::learning_rate(c, 25), c.lr0 * 0.1, 1e-15);
}

TEST(Schedule, WeightDecayIsCosineAndZeroAtEnd) {
  train::TrainConfig c;
  c.epochs = 40;
  EXPECT_DOUBLE_EQ(train::weight_decay(c, 0), c.weight_decay0);
  EXPECT_NEAR(train::weight_decay(c, 20), 0.5 * c.weight_decay0, 1e-18);
  EXPECT_NEAR(train::weight_decay(c, c.epochs), 0.0, 1e-20);
}

class AdamWTest : public ::testing::Test {
 protected:
  void SetUp() override {
    net::NetConfig nc;
    nc.seq_len = 4;
    nc.d_model = 2;
    nc.n_heads = 1;
    nc.d_ff = 2;
    nc.embed_dim = 2;
    nc.seed = 3;
    params = net::init_params(nc);
    grads = net::zero_gradients(params);
  }
  net::NetworkParams params;
  net::Gradients grads;
  train::TrainConfig config;
};

TEST_F(AdamWTest, ZeroGradientsZeroDecayLeaveParamsUnchanged) {
  const net::NetworkParams before = params;
  auto state = train::make_adam_state(params);
  train::adamw_step(params, grads, state, 1e-3, 0.0, config);
  EXPECT_EQ(state.step, 1);
  net::for_each_tensor_pair(params, before, [](const std::string& name, const auto& a,
                                               const auto& b, net::TensorRole) {
    EXPECT_TRUE(a == b) << name;
  });
}

TEST_F(AdamWTest, TwoStepsMatchHandComputation) {
  const double lr = 1e-2, wd = 1e-3;
  const double theta0 = params.head_dense.weight(0, 0);
  const double pos0 = params.pos_encoding(1, 1);
  const double bias0 = params.head_dense.bias(1);
  auto state = train::make_adam_state(params);

  grads.head_dense.weight(0, 0) = 0.5;
  train::adamw_step(params, grads, state, lr, wd, config);
  // Step 1: m = 0.05, v = 0.00025, m_hat = 0.5, v_hat = 0.25.
  const double theta1 = theta0 - (lr * 0.5 / (0.5 + 1e-8) + wd * theta0);
  EXPECT_NEAR(params.head_dense.weight(0, 0), theta1, 1e-15);

  grads.head_dense.weight(0, 0) = -1.0;
  train::adamw_step(params, grads, state, lr, wd, config);
  const double m2 = 0.9 * 0.05 + 0.1 * -1.0;
  const double v2 = 0.999 * 0.00025 + 0.001 * 1.0;
  const double m_hat = m2 / (1.0 - 0.9 * 0.9);
  const double v_hat = v2 / (1.0 - 0.999 * 0.999);
  const double theta2 = theta1 - (lr * m_hat / (std::sqrt(v_hat) + 1e-8) + wd * theta1);
  EXPECT_NEAR(params.head_dense.weight(0, 0), theta2, 1e-15);

  // Zero-gradient decayed tensor shrinks by wd per step; excluded tensors hold.
  EXPECT_NEAR(params.head_dense.bias(1), bias0 * (1 - wd) * (1 - wd), 1e-15);
  EXPECT_EQ(params.pos_encoding(1, 1), pos0);
  EXPECT_TRUE((params.pre_norm.gain.array() == 1.0).all());
}

TEST_F(AdamWTest, NonFiniteGradientAborts) {
  auto state = train::make_adam_state(params);
  grads.layers[0].key.weight(0, 1) = std::nan("");
  EXPECT_THROW(train::adamw_step(params, grads, state, 1e-3, 0.0, config), NumericError);
  EXPECT_EQ(state.step, 0);
}

// A tiny plain-gradient step on a fixed batch does not increase its loss.
TEST(Descent, SmallStepDoesNotIncreaseBatchLoss) {
  std::mt19937_64 rng(6);
  net::NetConfig nc;
  nc.seq_len = 12;
  nc.embed_dim = 6;
  nc.seed = 6;
  net::NetworkParams params = net::init_params(nc);
  std::vector<HapticSignal> batch;
  for (int i = 0; i < 8; ++i) batch.push_back(testing::random_signal(rng, 12, 6));
  const auto pos = random_positions(rng, 8, 0.5);
  const auto mined = train::mine(pos, 0.25);

  auto loss_of = [&](const net::NetworkParams& p) {
    net::NetworkParams copy = p;
    return train::batch_all_loss(net::forward(copy, batch, net::Mode::kTrain).embeddings,
                                 mined, 1.0)
        .loss;
  };
  net::NetworkParams work = params;
  const auto fwd = net::forward(work, batch, net::Mode::kTrain);
  const auto l = train::batch_all_loss(fwd.embeddings, mined, 1.0);
  ASSERT_GT(l.active_triplets, 0);
  const auto g = net::backward(params, fwd.cache, l.d_embeddings);
  net::NetworkParams stepped = params;
  net::for_each_tensor_pair(stepped, g, [](const std::string&, auto& t, const auto& d,
                                           net::TensorRole) { t -= 1e-7 * d; });
  EXPECT_LE(loss_of(stepped), loss_of(params) + 1e-15);
}

// Signals carry a random pattern per 1 m grid cell plus noise; positions are
// spread within each cell.
std::vector<train::TrainingSample> cell_dataset(std::uint64_t seed, int n, int seq_len) {
  std::mt19937_64 rng(seed);
  std::vector<HapticSignal> patterns;
  for (int c = 0; c < 9; ++c) patterns.push_back(testing::random_signal(rng, seq_len, 6));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.1);
  std::vector<train::TrainingSample> samples;
  for (int i = 0; i < n; ++i) {
    const int cell = i % 9;
    train::TrainingSample s;
    s.position = {cell % 3 + 0.4 + 0.2 * u(rng), cell / 3 + 0.4 + 0.2 * u(rng), 0.0};
    s.signal = patterns[cell];
    for (Eigen::Index k = 0; k < s.signal.samples.size(); ++k) {
      s.signal.samples.data()[k] += noise(rng);
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

net::NetConfig fit_net_config() {
  net::NetConfig nc;
  nc.seq_len = 16;
  nc.embed_dim = 8;
  nc.seed = 11;
  return nc;
}

train::TrainConfig fit_train_config() {
  train::TrainConfig tc;
  tc.batch_size = 24;
  tc.epochs = 12;
  tc.lr0 = 5e-3;
  tc.seed = 12;
  return tc;
}

TEST(Fit, LossDecreasesOnCellStructuredData) {
  const auto samples = cell_dataset(7, 96, 16);
  int calls = 0;
  const auto result = train::fit(samples, fit_net_config(), fit_train_config(),
                                 [&](const train::EpochLog&) { ++calls; });
  ASSERT_EQ(result.log.size(), 12u);
  EXPECT_EQ(calls, 12);
  EXPECT_LT(result.log.back().mean_loss, result.log.front().mean_loss);
  EXPECT_NEAR(result.log.back().lr, fit_train_config().lr0 * std::pow(0.01, 11.0 / 12.0),
              1e-15);
}

TEST(Fit, DeterministicGivenSeed) {
  const auto samples = cell_dataset(8, 60, 16);
  auto tc = fit_train_config();
  tc.epochs = 3;
  const auto a = train::fit(samples, fit_net_config(), tc);
  const auto b = train::fit(samples, fit_net_config(), tc);
  EXPECT_EQ(net::fingerprint(a.params), net::fingerprint(b.params));
  EXPECT_TRUE(a.params.running_mean == b.params.running_mean);
  EXPECT_TRUE(a.params.running_var == b.params.running_var);
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(a.log[i].mean_loss, b.log[i].mean_loss);
  }
}

TEST(Fit, TooSmallDatasetAndMissingTruthAreErrors) {
  const auto samples = cell_dataset(9, 2, 16);
  train::TrainConfig tc;
  EXPECT_THROW(train::fit(samples, fit_net_config(), tc), InvariantError);

  std::mt19937_64 rng(10);
  Trial t = testing::random_trial(rng, 3);
  t.events[1].truth_pose.reset();
  t.events[1].foothold_world_truth.reset();
  const std::vector<Trial> trials = {t};
  try {
    train::collect_samples(trials);
    FAIL() << "expected InvariantError";
  } catch (const InvariantError& e) {
    EXPECT_NE(std::string(e.what()).find(std::to_string(t.events[1].step_id)),
              std::string::npos);
  }
}

TEST(Fit, LossLogCsv) {
  const std::vector<train::EpochLog> log = {{0, 1.25, 10, 5e-4, 2e-4}, {1, 0.5, 3, 1e-4, 0.0}};
  const auto path = std::filesystem::temp_directory_path() / "hloc_train_test_loss.csv";
  train::write_loss_log(log, path);
  std::ifstream in(path);
  std::string header, row0, row1;
  std::getline(in, header);
  std::getline(in, row0);
  std::getline(in, row1);
  EXPECT_EQ(header, "epoch,mean_loss,active_triplets,lr,wd");
  EXPECT_EQ(row0, "0,1.25,10,5e-04,2e-04");
  EXPECT_EQ(row1, "1,0.5,3,1e-04,0");
}

TEST(TrainConfig, Validation) {
  train::TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.batch_size = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.margin = -0.1;
  EXPECT_THROW(c.validate(), ConfigError);
}

}  // namespace
}  // namespace hloc
