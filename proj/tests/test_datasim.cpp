// Copyright 2026 The fedkws Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "doctest.h"
#include "fedkws/datasim.hpp"
#include "fedkws/error.hpp"
#include "fedkws/filtering.hpp"

using namespace fedkws;

namespace {

DataConfig clean_single_domain() {
  DataConfig cfg = default_data_config();
  cfg.domains = {{"clean", 0.0, 1.0, true, true}};
  cfg.federated_mix = {1.0};
  cfg.central_mix = {1.0};
  cfg.amplitude_jitter = 0.0;
  return cfg;
}

LabeledExample stub_example(bool positive) {
  LabeledExample ex;
  ex.labels.is_positive = positive;
  return ex;
}

}  // namespace

TEST_CASE("noise-free positive examples are exactly zero outside the keyword") {
  const KeywordUniverse universe(clean_single_domain(), 7);
  Rng rng(3);
  const LabeledExample ex = universe.generate_example(0, true, rng);
  REQUIRE(ex.labels.is_positive);
  REQUIRE(ex.labels.end_of_keyword.has_value());
  for (std::size_t t = 0; t < ex.features.length(); ++t) {
    const bool in_keyword = ex.labels.encoder_class[t] != 0;
    const auto row = ex.features.frames.row(t);
    const bool all_zero = std::all_of(row.begin(), row.end(), [](double v) { return v == 0.0; });
    CHECK(all_zero == !in_keyword);
  }
}

TEST_CASE("negative examples have no end-of-keyword") {
  const KeywordUniverse universe(clean_single_domain(), 7);
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    const LabeledExample ex = universe.generate_example(0, false, rng);
    CHECK(!ex.labels.is_positive);
    CHECK(!ex.labels.end_of_keyword.has_value());
    for (int c : ex.labels.decoder_class) CHECK(c == 0);
  }
}

TEST_CASE("generation is bit-identical under a fixed seed") {
  const KeywordUniverse universe(default_data_config(), 11);
  Rng a(42), b(42);
  const LabeledExample e1 = universe.generate_example(1, true, a);
  const LabeledExample e2 = universe.generate_example(1, true, b);
  CHECK(e1.features.frames.data == e2.features.frames.data);
  CHECK(e1.labels.encoder_class == e2.labels.encoder_class);
  CHECK(e1.labels.end_of_keyword == e2.labels.end_of_keyword);
}

TEST_CASE("perfect calibration makes every implied label correct") {
  CalibrationConfig calib;
  calib.rule_accuracy = {1.0, 1.0, 1.0, 1.0};
  const auto rules = default_rules();
  Rng rng(9);
  const ScoreFn score = synthetic_score_fn();
  int selected = 0;
  for (int i = 0; i < 4000; ++i) {
    const bool positive = rng.bernoulli(0.5);
    const auto stub = stub_example(positive);
    const FeedbackFeatures fb = feedback_oracle(positive, score(stub, rng), calib, 0.5, rng);
    const FilterDecision d = classify(fb, rules);
    if (!d.selected) continue;
    selected++;
    CHECK((*d.implied_label == ImpliedLabel::kPositive) == positive);
  }
  CHECK(selected > 500);
}

TEST_CASE("feedback oracle matches the configured accuracy table at n=10000") {
  const CalibrationConfig calib;
  const auto rules = default_rules();
  Rng rng(123);
  const ScoreFn score = synthetic_score_fn();
  std::vector<std::pair<FeedbackFeatures, bool>> annotated;
  for (int i = 0; i < 10000; ++i) {
    const bool positive = rng.bernoulli(0.5);
    const auto stub = stub_example(positive);
    annotated.emplace_back(feedback_oracle(positive, score(stub, rng), calib, 0.5, rng),
                           positive);
  }
  const auto report = estimate_rule_accuracy(annotated, rules);
  // Rules are in priority order: server, rejected, high-score, reattempt.
  const double expected[] = {0.99, 0.91, 0.89, 0.88};
  for (std::size_t k = 0; k < 4; ++k) {
    REQUIRE(report[k].supported);
    CHECK(std::abs(report[k].accuracy - expected[k]) < 0.02);
  }
}

TEST_CASE("server acceptance implies inference acceptance") {
  const CalibrationConfig calib;
  Rng rng(77);
  const ScoreFn score = synthetic_score_fn();
  int servers = 0;
  for (int i = 0; i < 5000; ++i) {
    const bool positive = rng.bernoulli(0.5);
    const auto stub = stub_example(positive);
    const FeedbackFeatures fb = feedback_oracle(positive, score(stub, rng), calib, 0.5, rng);
    if (fb.server_accepted) {
      servers++;
      CHECK(fb.inference_accepted);
    }
  }
  CHECK(servers > 100);
}

TEST_CASE("calibration rejects probabilities outside the unit interval") {
  CalibrationConfig calib;
  calib.rule_accuracy[0] = 1.2;
  CHECK_THROWS_AS(calib.validate(0.5), ConfigError);
  calib = CalibrationConfig{};
  calib.rule_fraction = {0.5, 0.5, 0.5, 0.5};  // infeasible given the boost
  CHECK_THROWS_AS(calib.validate(0.5), ConfigError);
}

namespace {

CachedExample make_cached(const KeywordUniverse& universe, ExampleKind kind, Rng& rng) {
  LabeledExample ex = universe.generate_cached_example(0, kind == ExampleKind::kActivation, rng);
  FeedbackFeatures fb;
  fb.inference_accepted = kind == ExampleKind::kActivation;
  return CachedExample(std::move(ex), fb, kind);
}

}  // namespace

TEST_CASE("cache caps near-activations at 20 per day") {
  const KeywordUniverse universe(clean_single_domain(), 3);
  Rng rng(1);
  ClientCache cache(20, 63);
  for (int i = 0; i < 20; ++i) {
    CHECK(cache.add(make_cached(universe, ExampleKind::kNearActivation, rng), 0));
  }
  CHECK(!cache.add(make_cached(universe, ExampleKind::kNearActivation, rng), 0));
  CHECK(cache.size() == 20);
  // A new day resets the budget.
  CHECK(cache.add(make_cached(universe, ExampleKind::kNearActivation, rng), 1));
}

TEST_CASE("cache evicts examples older than 63 days") {
  const KeywordUniverse universe(clean_single_domain(), 3);
  Rng rng(2);
  ClientCache cache(20, 63);
  CHECK(cache.add(make_cached(universe, ExampleKind::kActivation, rng), 0));
  cache.advance_to_day(63);
  CHECK(cache.size() == 1);  // still within retention
  cache.advance_to_day(64);
  CHECK(cache.size() == 0);
}

TEST_CASE("activation examples are unlimited per day") {
  const KeywordUniverse universe(clean_single_domain(), 3);
  Rng rng(4);
  ClientCache cache(20, 63);
  for (int i = 0; i < 100; ++i) {
    CHECK(cache.add(make_cached(universe, ExampleKind::kActivation, rng), 0));
  }
  CHECK(cache.size() == 100);
}

TEST_CASE("cache policy survives random add/advance schedules") {
  const KeywordUniverse universe(clean_single_domain(), 3);
  Rng rng(5);
  for (int schedule = 0; schedule < 200; ++schedule) {
    ClientCache cache(20, 63);
    std::map<int, int> near_by_day;
    int day = 0;
    for (int op = 0; op < 60; ++op) {
      if (rng.bernoulli(0.25)) {
        day += static_cast<int>(rng.uniform_below(40));
        cache.advance_to_day(day);
      } else {
        const auto kind = rng.bernoulli(0.7) ? ExampleKind::kNearActivation
                                             : ExampleKind::kActivation;
        if (cache.add(make_cached(universe, kind, rng), day) &&
            kind == ExampleKind::kNearActivation) {
          near_by_day[day]++;
        }
      }
      // Invariants: per-day near cap and retention.
      for (const auto& [d, count] : near_by_day) CHECK(count <= 20);
      for (const auto& ex : cache.examples()) {
        CHECK(cache.current_day() - ex.day_added() <= 63);
      }
    }
  }
}

TEST_CASE("population median cache size tracks the configured median") {
  const KeywordUniverse universe(default_data_config(), 21);
  PopulationConfig cfg;
  cfg.n_clients = 200;
  Rng rng(31);
  const Population pop =
      build_population(universe, cfg, CalibrationConfig{}, synthetic_score_fn(), rng);
  REQUIRE(pop.clients.size() == 200);
  std::vector<std::size_t> sizes;
  for (const auto& c : pop.clients) sizes.push_back(c.cache.size());
  std::sort(sizes.begin(), sizes.end());
  const double median = static_cast<double>(sizes[99] + sizes[100]) / 2.0;
  CHECK(median > 45.0);
  CHECK(median < 55.0);
}

TEST_CASE("federated caches exclude non-federated domains") {
  const DataConfig data = default_data_config();
  const KeywordUniverse universe(data, 22);
  PopulationConfig cfg;
  cfg.n_clients = 40;
  Rng rng(32);
  const Population pop =
      build_population(universe, cfg, CalibrationConfig{}, synthetic_score_fn(), rng);
  const std::size_t farfield = data.domain_index("speaker-farfield");
  for (const auto& client : pop.clients) {
    for (const auto& ex : client.cache.examples()) {
      CHECK(ex.domain_index() != farfield);
    }
  }
}

TEST_CASE("single-client population is deterministic under a seed") {
  const KeywordUniverse universe(default_data_config(), 23);
  PopulationConfig cfg;
  cfg.n_clients = 1;
  Rng a(9), b(9);
  const Population p1 =
      build_population(universe, cfg, CalibrationConfig{}, synthetic_score_fn(), a);
  const Population p2 =
      build_population(universe, cfg, CalibrationConfig{}, synthetic_score_fn(), b);
  REQUIRE(p1.clients.size() == 1);
  REQUIRE(p1.clients[0].cache.size() == p2.clients[0].cache.size());
  for (std::size_t i = 0; i < p1.clients[0].cache.size(); ++i) {
    const auto& e1 = p1.clients[0].cache.examples()[i];
    const auto& e2 = p2.clients[0].cache.examples()[i];
    CHECK(e1.features().frames.data == e2.features().frames.data);
    CHECK(e1.feedback().inference_score == e2.feedback().inference_score);
  }
}

TEST_CASE("an empty federated domain mix is a config error") {
  DataConfig data = default_data_config();
  for (auto& d : data.domains) d.present_in_federated = false;
  CHECK_THROWS_AS(KeywordUniverse(data, 1), ConfigError);
}

TEST_CASE("eligibility follows flags, cache, and the 24h rule") {
  const KeywordUniverse universe(clean_single_domain(), 3);
  Rng rng(6);
  Population pop;
  ClientDevice fresh;
  fresh.id = 0;
  fresh.cache.add(make_cached(universe, ExampleKind::kActivation, rng), 0);
  ClientDevice recent = fresh;
  recent.id = 1;
  recent.last_participation_hours = 99.0;
  ClientDevice empty_cache;
  empty_cache.id = 2;
  ClientDevice unplugged = fresh;
  unplugged.id = 3;
  unplugged.charging = false;
  pop.clients = {fresh, recent, empty_cache, unplugged};

  const auto at_100h = eligible_clients(pop, 100.0);  // "recent" trained 1h ago
  CHECK(at_100h == std::vector<std::uint32_t>{0});
  const auto at_123h = eligible_clients(pop, 123.0);
  CHECK(at_123h == std::vector<std::uint32_t>{0, 1});
}

TEST_CASE("population snapshots round-trip exactly") {
  const KeywordUniverse universe(default_data_config(), 24);
  PopulationConfig cfg;
  cfg.n_clients = 6;
  cfg.median_cache_size = 10;
  cfg.min_cache_size = 4;
  cfg.max_cache_size = 20;
  Rng rng(33);
  const Population pop =
      build_population(universe, cfg, CalibrationConfig{}, synthetic_score_fn(), rng);

  const auto dir = std::filesystem::temp_directory_path() / "fedkws_pop_test";
  std::filesystem::create_directories(dir);
  const auto path1 = dir / "pop1.txt";
  const auto path2 = dir / "pop2.txt";
  export_population(pop, universe, path1);
  const Population imported = import_population(path1);
  export_population(imported, universe, path2);

  const auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  CHECK(slurp(path1) == slurp(path2));
  CHECK(slurp(path1.string() + ".blob") == slurp(path2.string() + ".blob"));

  REQUIRE(imported.clients.size() == pop.clients.size());
  for (std::size_t c = 0; c < pop.clients.size(); ++c) {
    REQUIRE(imported.clients[c].cache.size() == pop.clients[c].cache.size());
    for (std::size_t e = 0; e < pop.clients[c].cache.size(); ++e) {
      const auto& original = pop.clients[c].cache.examples()[e];
      const auto& restored = imported.clients[c].cache.examples()[e];
      CHECK(original.features().frames.data == restored.features().frames.data);
      CHECK(TruthOracle::truth(original).labels.is_positive ==
            TruthOracle::truth(restored).labels.is_positive);
      CHECK(original.feedback().inference_score == restored.feedback().inference_score);
    }
  }
}

TEST_CASE("training modules never touch the ground-truth accessor") {
  // API-level enforcement comes from the private-key constructor; this scan
  // guards against someone adding new friends to training code.
  const std::filesystem::path root = FEDKWS_SOURCE_DIR;
  const std::vector<std::filesystem::path> training_sources = {
      root / "include" / "fedkws" / "nn.hpp",         root / "src" / "nn.cpp",
      root / "include" / "fedkws" / "model.hpp",      root / "src" / "model.cpp",
      root / "include" / "fedkws" / "filtering.hpp",  root / "src" / "filtering.cpp",
      root / "include" / "fedkws" / "fedsim.hpp",     root / "src" / "fedsim.cpp",
      root / "include" / "fedkws" / "jointtrain.hpp", root / "src" / "jointtrain.cpp",
  };
  for (const auto& path : training_sources) {
    std::ifstream in(path);
    REQUIRE_MESSAGE(in.good(), path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    CHECK_MESSAGE(text.find("TruthOracle") == std::string::npos, path.string());
    CHECK_MESSAGE(text.find("GroundTruthKey") == std::string::npos, path.string());
  }
}
