#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "flowforge/errors.hpp"
#include "flowforge/rewards.hpp"

using namespace flowforge;
using namespace flowforge::rewards;
using numkit::Rng;

namespace {

ToyDataSpec toy_data() {
  return ToyDataSpec{{{Vec64{0.0, 0.0}, Vec64{2.0, 0.0}}, {Vec64{0.0, -1.0}}}, 0.1};
}

BackendFactory toy_factory() {
  return [](const std::string& id) -> std::unique_ptr<RewardBackend> {
    if (id == "A" || id == "affinity") return std::make_unique<ModeAffinityBackend>(id, toy_data());
    if (id == "B" || id == "winrate") return std::make_unique<ModeWinrateBackend>(id, toy_data());
    throw RegistryError("unknown reward backend '" + id + "'");
  };
}

// Exhaustive pairwise comparison by distance, written independently of the
// backend: smaller distance wins, equal distances split the point.
std::vector<double> round_robin(const std::vector<double>& dist) {
  const std::size_t k = dist.size();
  std::vector<double> out(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j) continue;
      out[i] += dist[i] < dist[j] ? 1.0 : (dist[i] == dist[j] ? 0.5 : 0.0);
    }
    out[i] /= static_cast<double>(k - 1);
  }
  return out;
}

std::size_t argmax(const Vec64& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

RewardOutput out(const char* name, std::vector<double> s) { return {name, Vec64(std::move(s))}; }

}  // namespace

TEST_CASE("mode_affinity scores") {
  const ModeAffinityBackend b("A", toy_data());
  const RewardParams p{{"target_mode", 1}};
  CHECK(score_pointwise(b, Vec64{2.0, 0.0}, model::Condition{0}, p) == 1.0);
  CHECK(score_pointwise(b, Vec64{2.0, 1.0}, model::Condition{0}, p) ==
        doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  const double r0 = score_pointwise(b, Vec64{2.5, 0.0}, model::Condition{0}, p);
  const double r1 = score_pointwise(b, Vec64{3.0, 0.0}, model::Condition{0}, p);
  const double r2 = score_pointwise(b, Vec64{3.5, 0.0}, model::Condition{0}, p);
  CHECK(r0 > r1);
  CHECK(r1 > r2);
  CHECK_THROWS_AS(score_pointwise(b, Vec64{0, 0}, model::Condition{0}, {}), ConfigError);
  CHECK_THROWS_AS(score_pointwise(b, Vec64{0, 0}, model::Condition{1}, p), ConfigError);
  CHECK_THROWS_AS(rank_groupwise(b, {Vec64{0, 0}, Vec64{1, 1}}, model::Condition{0}, p), DomainError);
}

TEST_CASE("mode_winrate examples") {
  const ModeWinrateBackend b("B", toy_data());
  const RewardParams p{{"target_mode", 0}};
  const model::Condition c{0};
  const Vec64 s = rank_groupwise(b, {Vec64{0.1, 0}, Vec64{0.5, 0}, Vec64{0.9, 0}}, c, p);
  CHECK(s == Vec64{1.0, 0.5, 0.0});
  CHECK(rank_groupwise(b, {Vec64{1, 1}, Vec64{1, 1}, Vec64{1, 1}}, c, p) == Vec64{0.5, 0.5, 0.5});
  CHECK_THROWS_AS(rank_groupwise(b, {Vec64{1, 1}}, c, p), DomainError);
  CHECK_THROWS_AS(score_pointwise(b, Vec64{1, 1}, c, p), DomainError);
}

TEST_CASE("mode_winrate matches a round-robin oracle and conserves points") {
  const ModeWinrateBackend b("B", toy_data());
  const RewardParams p{{"target_mode", 0}};
  Rng rng(12);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t k = 2 + rng.index(9);
    std::vector<Vec64> samples;
    std::vector<double> dist;
    for (std::size_t i = 0; i < k; ++i) {
      // Coarse coordinates make ties common.
      Vec64 x{static_cast<double>(rng.index(3)), static_cast<double>(rng.index(3))};
      dist.push_back(std::sqrt(numkit::squared_norm(x)));
      samples.push_back(x);
    }
    const Vec64 got = rank_groupwise(b, samples, model::Condition{0}, p);
    const auto want = round_robin(dist);
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-14));
      CHECK(got[i] >= 0.0);
      CHECK(got[i] <= 1.0);
      sum += got[i];
    }
    CHECK(sum == doctest::Approx(k / 2.0).epsilon(1e-12));
  }
}

TEST_CASE("load_rewards deduplicates backends") {
  const std::uint64_t before = RewardBackend::constructions();
  const auto loaded = load_rewards({{"r1", "A", 1.0, {{"target_mode", 0}}},
                                    {"r2", "A", 2.0, {{"target_mode", 1}}},
                                    {"r3", "B", 1.0, {{"target_mode", 0}}}},
                                   toy_factory());
  CHECK(loaded.backend_count() == 2);
  CHECK(loaded.load_count("A") == 1);
  CHECK(loaded.load_count("B") == 1);
  CHECK(RewardBackend::constructions() - before == 2);
  CHECK(&loaded.backend_for(0) == &loaded.backend_for(1));

  const auto single = load_rewards({{"r", "A", 1.0, {{"target_mode", 0}}}}, toy_factory());
  CHECK(single.backend_count() == 1);

  CHECK_THROWS_AS(load_rewards({}, toy_factory()), ConfigError);
  CHECK_THROWS_AS(load_rewards({{"r", "nope", 1.0, {}}}, toy_factory()), RegistryError);
  CHECK_THROWS_AS(load_rewards({{"r", "A", 1.0, {}}, {"r", "B", 1.0, {}}}, toy_factory()),
                  ConfigError);
  CHECK_THROWS_AS(load_rewards({{"r", "A", std::nan(""), {}}}, toy_factory()), ConfigError);
}

TEST_CASE("score_group routes each spec to its backend") {
  const auto loaded = load_rewards({{"aff", "A", 1.0, {{"target_mode", 0}}},
                                    {"win", "B", 1.0, {{"target_mode", 0}}}},
                                   toy_factory());
  const auto outs = loaded.score_group({Vec64{0, 0}, Vec64{1, 0}}, model::Condition{0});
  REQUIRE(outs.size() == 2);
  CHECK(outs[0].name == "aff");
  CHECK(outs[0].scores == Vec64{1.0, std::exp(-1.0)});
  CHECK(outs[1].scores == Vec64{1.0, 0.0});
}

TEST_CASE("aggregate_advantages examples") {
  const auto single = std::vector<RewardOutput>{out("a", {1, 2, 3, 5})};
  CHECK(aggregate_advantages(single, {1.0}, AdvantageMode::WeightedSum) ==
        aggregate_advantages(single, {1.0}, AdvantageMode::Gdpo));

  const std::vector<RewardOutput> two{out("r1", {0, 10}), out("r2", {1, 0})};
  const Vec64 ws = aggregate_advantages(two, {1.0, 1.0}, AdvantageMode::WeightedSum);
  const Vec64 gd = aggregate_advantages(two, {1.0, 1.0}, AdvantageMode::Gdpo);
  CHECK(std::abs(ws[0] + 1.0) < 1e-9);
  CHECK(std::abs(ws[1] - 1.0) < 1e-9);
  CHECK(std::abs(gd[0]) < 1e-9);
  CHECK(std::abs(gd[1]) < 1e-9);

  const std::vector<RewardOutput> flat{out("c", {3, 3, 3}), out("v", {0, 1, 2})};
  const Vec64 g2 = aggregate_advantages(flat, {1.0, 0.0}, AdvantageMode::Gdpo);
  CHECK(g2 == Vec64{0.0, 0.0, 0.0});
  CHECK(aggregate_advantages({out("c", {4, 4})}, {1.0}, AdvantageMode::WeightedSum) == Vec64{0.0, 0.0});

  CHECK_THROWS_AS(aggregate_advantages({out("a", {1})}, {1.0}, AdvantageMode::Gdpo), DomainError);
  CHECK_THROWS_AS(aggregate_advantages({out("a", {1, 2}), out("b", {1, 2, 3})}, {1.0, 1.0},
                                       AdvantageMode::Gdpo),
                  ShapeError);
  CHECK_THROWS_AS(aggregate_advantages(two, {1.0}, AdvantageMode::Gdpo), ShapeError);
}

TEST_CASE("aggregated advantages are zero-mean and scale robust") {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t g = 2 + rng.index(15);
    std::vector<double> a(g), b(g);
    for (std::size_t i = 0; i < g; ++i) {
      a[i] = rng.normal();
      b[i] = rng.uniform();
    }
    const std::vector<double> w{rng.uniform(0.1, 2.0), rng.uniform(0.1, 2.0)};
    const std::vector<RewardOutput> rs{out("a", a), out("b", b)};
    for (auto mode : {AdvantageMode::WeightedSum, AdvantageMode::Gdpo}) {
      const Vec64 adv = aggregate_advantages(rs, w, mode);
      CHECK(std::abs(numkit::mean(adv.span())) < 1e-9);
    }

    const double c = rng.uniform(0.01, 100.0);
    std::vector<double> a_scaled = a;
    for (double& x : a_scaled) x *= c;
    const Vec64 g1 = aggregate_advantages(rs, w, AdvantageMode::Gdpo);
    const Vec64 g2 = aggregate_advantages({out("a", a_scaled), out("b", b)}, w, AdvantageMode::Gdpo);
    CHECK(argmax(g1) == argmax(g2));

    const std::vector<double> flat(g, 0.5);
    const Vec64 w1 = aggregate_advantages({out("a", a), out("f", flat)}, w, AdvantageMode::WeightedSum);
    const Vec64 w2 =
        aggregate_advantages({out("a", a_scaled), out("f", flat)}, w, AdvantageMode::WeightedSum);
    CHECK(argmax(w1) == argmax(w2));
  }
}

TEST_CASE("unit_interval_scores") {
  CHECK(unit_interval_scores(out("p", {1, 3, 2}), RewardKind::Pointwise) == Vec64{0.0, 1.0, 0.5});
  CHECK(unit_interval_scores(out("p", {2, 2}), RewardKind::Pointwise) == Vec64{0.5, 0.5});
  CHECK(unit_interval_scores(out("g", {0.25, 0.75}), RewardKind::Groupwise) == Vec64{0.25, 0.75});
}

TEST_CASE("advantage mode names") {
  CHECK(parse_advantage_mode("gdpo") == AdvantageMode::Gdpo);
  CHECK(advantage_mode_name(AdvantageMode::WeightedSum) == "weighted_sum");
  CHECK_FALSE(parse_advantage_mode("sum").has_value());
}
