#include <gtest/gtest.h>

#include <random>
#include <set>

#include "freqdeno/freqdeno.hpp"

using namespace freqdeno;

TEST(Speckle, UnitMeanAndVarianceOneOverL) {
  for (double looks : {1.0, 4.0, 16.0}) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(looks) * 13);
    const int n = 200000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double v = speckle_draw(rng, looks);
      ASSERT_GT(v, 0.0);
      s += v;
      s2 += v * v;
    }
    const double mean = s / n, var = s2 / n - mean * mean;
    EXPECT_NEAR(mean, 1.0, 0.05) << "L=" << looks;
    EXPECT_NEAR(var, 1.0 / looks, 0.05 / looks) << "L=" << looks;
  }
}

TEST(Scenes, TargetsAreDisjointRectanglesOnBackground) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const std::size_t h = 16 + (seed % 3) * 8, w = 16 + (seed % 5) * 4;
    const auto s = make_scene(seed, h, w, 4.0);
    ASSERT_GE(s.targets.size(), 1u);
    ASSERT_LE(s.targets.size(), 3u);
    const std::size_t max_side = std::max<std::size_t>(3, std::min(h, w) / 4);
    for (std::size_t i = 0; i < s.targets.size(); ++i) {
      const Rect& r = s.targets[i];
      EXPECT_GE(r.h, 3u);
      EXPECT_LE(r.h, max_side);
      EXPECT_GE(r.w, 3u);
      EXPECT_LE(r.w, max_side);
      EXPECT_LE(r.y + r.h, h);
      EXPECT_LE(r.x + r.w, w);
      for (std::size_t j = i + 1; j < s.targets.size(); ++j) EXPECT_FALSE(r.overlaps(s.targets[j]));
      const double amp = s.clean[r.y * w + r.x];
      EXPECT_GE(amp, 0.5);
      EXPECT_LE(amp, 1.0);
    }
    for (std::size_t i = 0; i < h * w; ++i) {
      EXPECT_EQ(s.mask[i] > 0.5, s.clean[i] != kBackground);
      EXPECT_GT(s.noisy[i], 0.0);
    }
  }
}

TEST(Scenes, GenerateIsDeterministicAndValidated) {
  const auto a = generate(3, 4, 16, 16, 4.0), b = generate(3, 4, 16, 16, 4.0), c = generate(4, 4, 16, 16, 4.0);
  ASSERT_EQ(a.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(a[i].noisy, b[i].noisy);
    EXPECT_EQ(a[i].clean, b[i].clean);
  }
  EXPECT_FALSE(a[0].noisy == c[0].noisy);
  EXPECT_THROW(generate(0, 1, 8, 16, 4.0), ConfigError);
  EXPECT_THROW(generate(0, 1, 16, 15, 4.0), ConfigError);
  EXPECT_THROW(generate(0, 1, 16, 16, 0.5), ConfigError);
}

TEST(Split, EightyTwentyDisjoint) {
  const auto s = split_scenes(64, 7);
  EXPECT_EQ(s.train.size(), 51u);
  EXPECT_EQ(s.held_out.size(), 13u);
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  all.insert(s.held_out.begin(), s.held_out.end());
  EXPECT_EQ(all.size(), 64u);
  EXPECT_EQ(split_scenes(64, 7).train, s.train);
}

TEST(Report, RoundTripIsExact) {
  TrialReport r;
  r.config_id = "stride:stride-4";
  r.seed = 12345678901234ull;
  r.epoch_losses = {0.1, 1.0 / 3.0, 6.02214076e23, 5e-324};
  r.final_metric = 0.0123456789012345678;
  r.runtime_ms = 17.25;
  r.max_imag_residue = 1.5e-17;
  r.initial_metric = std::nextafter(0.2, 1.0);
  const std::string line = serialize(r);
  EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 6);
  EXPECT_EQ(parse_report(line), r);

  TrialReport empty;
  empty.config_id = "x";
  EXPECT_EQ(parse_report(serialize(empty)), empty);
}

TEST(Report, MalformedLinesAreRejected) {
  EXPECT_THROW(parse_report("a\t1\t0.1\t0.2\t3\t0"), FormatError);
  EXPECT_THROW(parse_report("a\tx\t0.1\t0.2\t3\t0\t0.1"), FormatError);
  EXPECT_THROW(parse_report("a\t1\t0.1,zz\t0.2\t3\t0\t0.1"), FormatError);
}

TEST(ToyNet, HostStaysSmall) {
  const ToyNet net(4, DenoModule(DenoConfig{}, 0), 0);
  EXPECT_LT(net.host_parameter_count(), 10000u);
  EXPECT_EQ(net.parameter_count(), net.host_parameter_count() + net.denoiser().parameter_count());
  EXPECT_THROW(ToyNet(0, DenoModule(DenoConfig{}, 0), 0), ConfigError);
}

TEST(ToyNet, LossesMatchDefinitions) {
  const auto scenes = generate(1, 1, 16, 16, 4.0);
  for (Task task : {Task::denoise, Task::detect}) {
    const ToyNet net(2, DenoModule(DenoConfig{.stride = 4}, 0), 0, task);
    const Tensor p = net.predict(scenes[0].noisy);
    Tape t;
    const double got = t.value(net.loss(t.constant(p), scenes[0])).item();
    double want = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (task == Task::denoise) {
        want += (p[i] - scenes[0].clean[i]) * (p[i] - scenes[0].clean[i]);
      } else {
        const double prob = 1.0 / (1.0 + std::exp(-p[i]));
        const double y = scenes[0].mask[i];
        want += -(y * std::log(prob) + (1 - y) * std::log(1 - prob));
      }
    }
    EXPECT_NEAR(got, want / static_cast<double>(p.size()), 1e-12);
  }
}

TEST(Train, ZeroEpochsKeepsInitialMetric) {
  const auto scenes = generate(2, 10, 16, 16, 4.0);
  ToyNet net(2, DenoModule(DenoConfig{.stride = 4}, 0), 0);
  const auto r = train(net, scenes, TrainOptions{0, 0.05, 0, 4});
  EXPECT_TRUE(r.epoch_losses.empty());
  EXPECT_EQ(r.final_metric, r.initial_metric);
  EXPECT_THROW(train(net, scenes, TrainOptions{1, 0.05, 0, 0}), ConfigError);
}

TEST(Train, ShortRunReducesLossAndIsReproducible) {
  const auto scenes = generate(3, 16, 16, 16, 4.0);
  auto run = [&] {
    ToyNet net(2, DenoModule(DenoConfig{.stride = 4}, 1), 1);
    return train(net, scenes, TrainOptions{4, 0.05, 1, 4});
  };
  const auto a = run(), b = run();
  ASSERT_EQ(a.epoch_losses.size(), 4u);
  EXPECT_LT(a.epoch_losses.back(), a.epoch_losses.front());
  EXPECT_EQ(a.epoch_losses, b.epoch_losses);
  EXPECT_EQ(a.final_metric, b.final_metric);
  EXPECT_LT(a.final_metric, a.initial_metric);
}

TEST(Train, DivergenceIsReported) {
  const auto scenes = generate(4, 8, 16, 16, 4.0);
  ToyNet net(2, DenoModule(DenoConfig{.stride = 4}, 0), 0);
  try {
    train(net, scenes, TrainOptions{30, 1e6, 0, 2}, "explode");
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("explode"), std::string::npos);
  }
}

TEST(Train, DetectionMetricIsAnF1) {
  const auto scenes = generate(5, 10, 16, 16, 4.0);
  ToyNet net(2, DenoModule(DenoConfig{.stride = 4}, 0), 0, Task::detect);
  const auto r = train(net, scenes, TrainOptions{1, 0.05, 0, 4});
  EXPECT_GE(r.final_metric, 0.0);
  EXPECT_LE(r.final_metric, 1.0);
}

TEST(Sweep, RowSetsMirrorTheAblationTables) {
  const DenoConfig base;
  auto labels = [&](SweepAxis a) {
    std::vector<std::string> out;
    for (const auto& r : sweep_rows(a, base)) out.push_back(r.label);
    return out;
  };
  EXPECT_EQ(labels(SweepAxis::stride),
            (std::vector<std::string>{"stride-1", "stride-2", "stride-4", "stride-8", "stride-16"}));
  EXPECT_EQ(labels(SweepAxis::refine), (std::vector<std::string>{"amp-off_phase-off", "amp-on_phase-off",
                                                                 "amp-off_phase-on", "amp-on_phase-on"}));
  EXPECT_EQ(labels(SweepAxis::exchange), (std::vector<std::string>{"baseline", "no-exchange", "token-exchange"}));
  EXPECT_EQ(labels(SweepAxis::phase),
            (std::vector<std::string>{"split-off_align-off", "split-on_align-off", "split-on_align-on"}));
  const auto ex = sweep_rows(SweepAxis::exchange, base);
  EXPECT_TRUE(ex[0].config.is_identity());
  EXPECT_FALSE(ex[1].config.token_exchange);
  EXPECT_TRUE(ex[2].config.token_exchange);
  EXPECT_EQ(parse_axis("phase"), SweepAxis::phase);
  EXPECT_THROW(parse_axis("depth"), ConfigError);
}

TEST(Sweep, ThreadedResultsMatchSerial) {
  const auto scenes = generate(6, 10, 16, 16, 4.0);
  SweepOptions opt;
  opt.channels = 2;
  opt.seeds = {0, 1};
  opt.train = TrainOptions{1, 0.05, 0, 4};
  opt.threads = 1;
  DenoConfig base;
  base.stride = 4;
  const auto serial = ablation_sweep(base, SweepAxis::exchange, scenes, opt);
  opt.threads = 3;
  const auto threaded = ablation_sweep(base, SweepAxis::exchange, scenes, opt);
  ASSERT_EQ(serial.size(), 6u);
  for (std::size_t i = 0; i < serial.size(); ++i) {
    EXPECT_EQ(serial[i].config_id, threaded[i].config_id);
    EXPECT_EQ(serial[i].seed, threaded[i].seed);
    EXPECT_EQ(serial[i].epoch_losses, threaded[i].epoch_losses);
    EXPECT_EQ(serial[i].final_metric, threaded[i].final_metric);
  }
  EXPECT_EQ(serial[0].config_id, "exchange:baseline");
  EXPECT_EQ(serial[5].config_id, "exchange:token-exchange");
  const std::string table = summary_table(serial, "held-out MSE");
  EXPECT_NE(table.find("exchange:no-exchange"), std::string::npos);
  EXPECT_EQ(summarize(serial).size(), 3u);
}

TEST(Sweep, WorkerCountHonoursEnvironmentCap) {
  EXPECT_EQ(worker_count(5), 5u);
  setenv("FREQDENO_THREADS", "1", 1);
  EXPECT_EQ(worker_count(0), 1u);
  unsetenv("FREQDENO_THREADS");
  EXPECT_GE(worker_count(0), 1u);
}
