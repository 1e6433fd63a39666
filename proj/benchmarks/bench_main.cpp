#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "hloc/map.hpp"
#include "hloc/mcl.hpp"
#include "hloc/net.hpp"
#include "hloc/train.hpp"

namespace {

using namespace hloc;

HapticSignal random_signal(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  HapticSignal s{Eigen::MatrixXd(kSignalLength, kSignalChannels)};
  for (Eigen::Index i = 0; i < s.samples.size(); ++i) s.samples(i) = g(rng);
  return s;
}

void BM_EmbedSingle(benchmark::State& state) {
  net::NetConfig c;
  c.embed_dim = static_cast<int>(state.range(0));
  const net::NetworkParams p = net::init_params(c);
  std::mt19937_64 rng(1);
  const HapticSignal s = random_signal(rng);
  for (auto _ : state) benchmark::DoNotOptimize(net::embed(p, s));
}
BENCHMARK(BM_EmbedSingle)->Arg(2)->Arg(16)->Arg(256)->Unit(benchmark::kMicrosecond);

void BM_TrainStep(benchmark::State& state) {
  net::NetConfig c;
  train::TrainConfig tc;
  net::NetworkParams p = net::init_params(c);
  auto adam = train::make_adam_state(p);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int batch = static_cast<int>(state.range(0));
  std::vector<HapticSignal> signals;
  std::vector<Eigen::Vector3d> positions;
  for (int i = 0; i < batch; ++i) {
    signals.push_back(random_signal(rng));
    positions.emplace_back(u(rng), u(rng), 0.0);
  }
  const auto mined = train::mine(positions, tc.d_thr);
  for (auto _ : state) {
    auto fwd = net::forward(p, signals, net::Mode::kTrain);
    const auto loss = train::batch_all_loss(fwd.embeddings, mined, tc.margin);
    const auto grads = net::backward(p, fwd.cache, loss.d_embeddings);
    train::adamw_step(p, grads, adam, 1e-6, 0.0, tc);
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_TrainStep)->Arg(128)->Unit(benchmark::kMillisecond);

map::SparseHapticMap random_map(int n, int dim, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<map::MapEntry> entries(n);
  for (int i = 0; i < n; ++i) {
    entries[i].xy = {3.5 * u(rng), 7.0 * u(rng)};
    entries[i].embedding = Eigen::VectorXd::Random(dim);
    entries[i].source_step_id = i;
  }
  return map::SparseHapticMap(dim, std::move(entries));
}

void BM_NearestQuery(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const auto m = random_map(static_cast<int>(state.range(0)), 8, rng);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Eigen::Vector2d> queries;
  for (int i = 0; i < 1024; ++i) queries.emplace_back(3.5 * u(rng), 7.0 * u(rng));
  std::size_t k = 0;
  for (auto _ : state) benchmark::DoNotOptimize(m.nearest(queries[k++ & 1023]));
}
BENCHMARK(BM_NearestQuery)->Arg(100)->Arg(1000)->Arg(10000);

void BM_FilterUpdate(benchmark::State& state) {
  std::mt19937_64 rng(4);
  const int dim = 256;
  const auto m = random_map(1000, dim, rng);
  const mcl::MclConfig mc;
  const mcl::MeasurementModelConfig mm;
  std::vector<mcl::Particle> particles =
      mcl::initialize(Pose::from_xyz_yaw(1.75, 3.5, 0.45, 0.0), mc, rng);
  const Eigen::VectorXd embedding = Eigen::VectorXd::Random(dim);
  for (auto _ : state) {
    mcl::update(particles, {0.3, 0.2, -0.45}, embedding, m, mm);
    mcl::normalize_weights(particles);
  }
  state.SetItemsProcessed(state.iterations() * particles.size());
}
BENCHMARK(BM_FilterUpdate);

}  // namespace

BENCHMARK_MAIN();
