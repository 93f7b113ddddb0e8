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

#include "fedkws/datasim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fedkws/error.hpp"

namespace fedkws {

namespace {

constexpr std::uint64_t kClientStream = 0xC11E;
constexpr std::uint64_t kPatternStream = 0xBADC0DE;

std::size_t weighted_pick(std::span<const double> weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    u -= weights[i];
    if (u < 0.0) return i;
  }
  return weights.size() - 1;
}

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

// Conditional probability of landing in each selection-condition bucket
// given the ground truth, derived from the configured per-condition accuracy
// and population fraction by Bayes inversion.
std::array<double, 4> bucket_probs(const CalibrationConfig& c, bool positive,
                                   double positive_rate) {
  std::array<double, 4> p{};
  const double rho = positive ? positive_rate : 1.0 - positive_rate;
  for (std::size_t k = 0; k < 4; ++k) {
    // Condition 0 implies a negative label, the rest imply positive.
    const double match_given_truth =
        ((k == 0) == !positive) ? c.rule_accuracy[k] : 1.0 - c.rule_accuracy[k];
    p[k] = c.rule_fraction[k] * match_given_truth / rho;
  }
  return p;
}

}  // namespace

std::size_t DataConfig::domain_index(const std::string& name) const {
  for (std::size_t i = 0; i < domains.size(); ++i) {
    if (domains[i].name == name) return i;
  }
  throw ConfigError(cat("unknown domain '", name, "'"));
}

void DataConfig::validate() const {
  if (domains.empty()) throw ConfigError("data config needs at least one domain");
  if (federated_mix.size() != domains.size() || central_mix.size() != domains.size()) {
    throw ConfigError("domain mixes must be aligned with the domain list");
  }
  for (const auto& d : domains) {
    if (d.noise_sigma < 0.0) throw ConfigError(cat("domain ", d.name, ": noise_sigma < 0"));
  }
  double fed = 0.0;
  double central = 0.0;
  for (std::size_t i = 0; i < domains.size(); ++i) {
    if (federated_mix[i] < 0.0 || central_mix[i] < 0.0) {
      throw ConfigError("domain mix weights must be >= 0");
    }
    if (domains[i].present_in_federated) fed += federated_mix[i];
    if (domains[i].present_in_central) central += central_mix[i];
  }
  if (fed <= 0.0) throw ConfigError("federated domain mix is empty");
  if (central <= 0.0) throw ConfigError("central domain mix is empty");
  if (num_units < 1 || unit_frames < 1) throw ConfigError("units must be non-degenerate");
  if (num_units + 1 > 9) throw ConfigError("at most 8 sub-units supported");
  if (example_frames < keyword_frames() + 8) {
    throw ConfigError(cat("example_frames ", example_frames, " too short for a ",
                          keyword_frames(), "-frame keyword"));
  }
  if (!(positive_rate > 0.0 && positive_rate < 1.0)) {
    throw ConfigError("positive_rate must be in (0,1)");
  }
}

DataConfig default_data_config() {
  DataConfig cfg;
  cfg.domains = {
      {"phone-quiet", 0.25, 1.0, true, true},
      {"phone-noisy", 0.4, 0.9, true, false},
      {"speaker-farfield", 0.1, 0.22, false, true},
  };
  cfg.federated_mix = {0.5, 0.5, 0.0};
  cfg.central_mix = {0.5, 0.0, 0.5};
  return cfg;
}

KeywordUniverse::KeywordUniverse(DataConfig config, std::uint64_t seed)
    : config_(std::move(config)), seed_(seed) {
  config_.validate();
  Rng rng = Rng(seed).child(kPatternStream);
  const std::size_t n = config_.num_units;
  const std::size_t d = config_.feature_dim;
  unit_patterns_ = Tensor2(n, d);
  // Random directions, orthonormalized so sub-units are distinguishable.
  for (std::size_t u = 0; u < n; ++u) {
    auto row = unit_patterns_.row(u);
    for (double& v : row) v = rng.normal();
    for (std::size_t prev = 0; prev < u; ++prev) {
      const double proj = dot(row, unit_patterns_.row(prev));
      axpy(-proj, unit_patterns_.row(prev), row);
    }
    const double norm = l2_norm(row);
    for (double& v : row) v /= norm;
  }
}

LabeledExample KeywordUniverse::generate_example(std::size_t domain_index, bool positive,
                                                 const NegativeMix& mix, Rng& rng) const {
  const DomainSpec& domain = config_.domain(domain_index);
  const std::size_t t_len = config_.example_frames;
  const std::size_t dim = config_.feature_dim;

  LabeledExample ex;
  ex.domain_index = static_cast<std::uint32_t>(domain_index);
  ex.features.frames = Tensor2(t_len, dim);
  for (double& v : ex.features.frames.data) v = domain.noise_sigma * rng.normal();
  ex.labels.encoder_class.assign(t_len, 0);
  ex.labels.decoder_class.assign(t_len, 0);
  ex.labels.is_positive = positive;

  // Unit order: the keyword for positives, a scramble or truncation for
  // patterned negatives, nothing for plain noise.
  std::vector<std::size_t> order;
  if (positive) {
    order.resize(config_.num_units);
    std::iota(order.begin(), order.end(), 0);
  } else {
    const double weights[] = {mix.noise, mix.scramble, mix.partial};
    switch (weighted_pick(weights, rng)) {
      case 0:
        break;
      case 1: {
        order.resize(config_.num_units);
        std::iota(order.begin(), order.end(), 0);
        do {
          for (std::size_t i = order.size() - 1; i > 0; --i) {
            std::swap(order[i], order[rng.uniform_below(i + 1)]);
          }
        } while (std::is_sorted(order.begin(), order.end()));
        break;
      }
      default: {
        order.resize(config_.num_units - 1);
        std::iota(order.begin(), order.end(), 0);
        break;
      }
    }
  }

  if (!order.empty()) {
    const std::size_t span = order.size() * config_.unit_frames;
    const std::size_t lead = 3;
    const std::size_t tail = 5;
    const std::size_t start = lead + rng.uniform_below(t_len - span - lead - tail + 1);
    const double amplitude =
        domain.keyword_gain * (1.0 + config_.amplitude_jitter * rng.normal());
    for (std::size_t i = 0; i < order.size(); ++i) {
      const auto pattern = unit_patterns_.row(order[i]);
      for (std::size_t j = 0; j < config_.unit_frames; ++j) {
        const std::size_t t = start + i * config_.unit_frames + j;
        axpy(amplitude, pattern, ex.features.frames.row(t));
        ex.labels.encoder_class[t] = static_cast<int>(order[i]) + 1;
      }
    }
    if (positive) {
      const std::size_t eok = start + span - 1;
      ex.labels.end_of_keyword = eok;
      const std::size_t from =
          eok >= config_.decoder_label_tail ? eok - config_.decoder_label_tail : 0;
      for (std::size_t t = from; t <= eok; ++t) ex.labels.decoder_class[t] = 1;
    }
  }
  ex.labels.validate(t_len, config_.encoder_classes());
  return ex;
}

LabeledExample KeywordUniverse::generate_example(std::size_t domain_index, bool positive,
                                                 Rng& rng) const {
  return generate_example(domain_index, positive, config_.open_negatives, rng);
}

LabeledExample KeywordUniverse::generate_cached_example(std::size_t domain_index, bool positive,
                                                        Rng& rng) const {
  return generate_example(domain_index, positive, config_.cached_negatives, rng);
}

void CalibrationConfig::validate(double positive_rate) const {
  for (double a : rule_accuracy) {
    if (!(a >= 0.0 && a <= 1.0)) throw ConfigError(cat("rule accuracy ", a, " outside [0,1]"));
  }
  for (double f : rule_fraction) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError(cat("rule fraction ", f, " outside [0,1]"));
  }
  if (!(agree_boost > 0.0) || !(disagree_damp >= 0.0)) {
    throw ConfigError("agreement multipliers must be positive");
  }
  for (double p : {unmatched_accept_rate_positive, unmatched_accept_rate_negative}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(cat("accept rate ", p, " outside [0,1]"));
  }
  if (!(nominal_agreement > 0.0 && nominal_agreement < 1.0)) {
    throw ConfigError("nominal_agreement must lie in (0,1)");
  }
  const double mean_multiplier =
      disagree_damp + (agree_boost - disagree_damp) * nominal_agreement;
  const double worst = std::max(agree_boost, disagree_damp) / mean_multiplier;
  for (const bool positive : {false, true}) {
    const auto p = bucket_probs(*this, positive, positive_rate);
    const double total = std::accumulate(p.begin(), p.end(), 0.0);
    if (total * worst > 1.0) {
      throw ConfigError(cat("selection-condition probabilities sum to ", total * worst,
                            " for truth=", positive, "; reduce rule fractions or boost"));
    }
  }
}

FeedbackFeatures feedback_oracle(bool truth_is_positive, double inference_score,
                                 const CalibrationConfig& calib, double positive_rate, Rng& rng) {
  const double score = clamp01(inference_score);
  auto p = bucket_probs(calib, truth_is_positive, positive_rate);
  // Feedback signals and the deployed scorer both track acoustic clarity:
  // examples where the scorer agreed with the truth are more likely to end
  // up in one of the high-confidence conditions.
  const bool agree = (score >= 0.5) == truth_is_positive;
  const double mean_multiplier =
      calib.disagree_damp +
      (calib.agree_boost - calib.disagree_damp) * calib.nominal_agreement;
  const double w = (agree ? calib.agree_boost : calib.disagree_damp) / mean_multiplier;
  for (double& v : p) v *= w;

  FeedbackFeatures fb;
  fb.inference_score = score;
  double u = rng.uniform();
  int bucket = -1;
  for (int k = 0; k < 4; ++k) {
    u -= p[k];
    if (u < 0.0) {
      bucket = k;
      break;
    }
  }
  switch (bucket) {
    case 0:  // inference rejected, no reattempt
      fb.inference_accepted = false;
      fb.reattempt = false;
      fb.speaker_id_accepted = rng.bernoulli(0.5);
      fb.server_accepted = false;
      break;
    case 1:  // speaker-id rejected, no reattempt, score above threshold
      fb.inference_accepted = true;
      fb.reattempt = false;
      fb.speaker_id_accepted = false;
      fb.server_accepted = false;
      fb.inference_score = std::max(score, rng.uniform(calib.score_bump_low, 1.0));
      break;
    case 2:  // speaker-id rejected, reattempt
      fb.inference_accepted = false;
      fb.reattempt = true;
      fb.speaker_id_accepted = false;
      fb.server_accepted = false;
      break;
    case 3:  // server accepted
      fb.inference_accepted = true;
      fb.reattempt = false;
      fb.speaker_id_accepted = true;
      fb.server_accepted = true;
      break;
    default: {  // matches no condition
      const double accept_rate = truth_is_positive ? calib.unmatched_accept_rate_positive
                                                   : calib.unmatched_accept_rate_negative;
      fb.inference_accepted = rng.bernoulli(accept_rate);
      // Speaker-id acceptance blocks the speaker-id conditions; a reattempt
      // after a reject blocks the rejected-without-reattempt condition.
      fb.speaker_id_accepted = true;
      fb.reattempt = fb.inference_accepted ? rng.bernoulli(0.3) : true;
      fb.server_accepted = false;
      break;
    }
  }
  return fb;
}

FeedbackFeatures feedback_oracle(const LabeledExample& example, double inference_score,
                                 const CalibrationConfig& calib, double positive_rate, Rng& rng) {
  return feedback_oracle(example.labels.is_positive, inference_score, calib, positive_rate, rng);
}

bool ClientCache::add(CachedExample ex, int day) {
  advance_to_day(day);
  if (ex.kind() == ExampleKind::kNearActivation) {
    if (near_added_today_ >= near_cap_) return false;
    near_added_today_++;
  }
  ex.stamp_day(current_day_);
  examples_.push_back(std::move(ex));
  return true;
}

void ClientCache::advance_to_day(int day) {
  if (day <= current_day_) return;
  current_day_ = day;
  near_added_today_ = 0;
  std::erase_if(examples_, [&](const CachedExample& e) {
    return current_day_ - e.day_added() > retention_days_;
  });
}

ScoreFn model_score_fn(const Model& inference_model, double noise_sigma) {
  return [inference_model, noise_sigma](const LabeledExample& ex, Rng& rng) {
    const double raw = keyword_score(inference_model.arch, inference_model.params, ex.features);
    return clamp01(raw + noise_sigma * rng.normal());
  };
}

ScoreFn synthetic_score_fn() {
  return [](const LabeledExample& ex, Rng& rng) {
    const double spread = 0.28 * std::abs(rng.normal());
    return clamp01(ex.labels.is_positive ? 0.92 - spread : 0.08 + spread);
  };
}

Population build_population(const KeywordUniverse& universe, const PopulationConfig& cfg,
                            const CalibrationConfig& calib, const ScoreFn& score_fn, Rng& rng) {
  const DataConfig& data = universe.config();
  data.validate();
  calib.validate(data.positive_rate);
  if (cfg.n_clients < 1) throw ConfigError("population needs at least one client");

  std::vector<double> fed_weights(data.domains.size(), 0.0);
  double fed_total = 0.0;
  for (std::size_t i = 0; i < data.domains.size(); ++i) {
    if (data.domains[i].present_in_federated) {
      fed_weights[i] = data.federated_mix[i];
      fed_total += fed_weights[i];
    }
  }
  if (fed_total <= 0.0) throw ConfigError("federated domain mix is empty");

  Population population;
  population.built_through_day = cfg.fill_days - 1;
  population.clients.reserve(cfg.n_clients);
  for (std::size_t i = 0; i < cfg.n_clients; ++i) {
    Rng crng = rng.child(kClientStream, i);
    ClientDevice device;
    device.id = static_cast<std::uint32_t>(i);
    device.cache = ClientCache(cfg.near_cap_per_day, cfg.retention_days);
    device.charging = crng.bernoulli(cfg.eligibility_rate);
    device.idle = crng.bernoulli(cfg.eligibility_rate);
    device.unmetered = crng.bernoulli(cfg.eligibility_rate);

    const double raw = crng.lognormal(cfg.median_cache_size, cfg.cache_size_sigma);
    const std::size_t target = std::min<std::size_t>(
        cfg.max_cache_size,
        std::max<std::size_t>(cfg.min_cache_size, static_cast<std::size_t>(std::llround(raw))));

    for (std::size_t j = 0; j < target; ++j) {
      const int day = static_cast<int>(j * static_cast<std::size_t>(cfg.fill_days) / target);
      const std::size_t domain = weighted_pick(fed_weights, crng);
      const bool positive = crng.bernoulli(data.positive_rate);
      LabeledExample ex = universe.generate_cached_example(domain, positive, crng);
      ex.day = day;
      const double score = score_fn(ex, crng);
      const FeedbackFeatures fb = feedback_oracle(ex, score, calib, data.positive_rate, crng);
      const ExampleKind kind =
          fb.inference_accepted ? ExampleKind::kActivation : ExampleKind::kNearActivation;
      device.cache.add(CachedExample(std::move(ex), fb, kind), day);
    }
    device.cache.advance_to_day(population.built_through_day);
    population.clients.push_back(std::move(device));
  }
  return population;
}

std::vector<std::uint32_t> eligible_clients(const Population& population,
                                            double sim_time_hours) {
  std::vector<std::uint32_t> ids;
  for (const auto& device : population.clients) {
    if (!device.flags_set()) continue;
    if (device.cache.empty()) continue;
    if (sim_time_hours - device.last_participation_hours < 24.0) continue;
    ids.push_back(device.id);
  }
  return ids;
}

std::vector<LabeledExample> make_central_dataset(const KeywordUniverse& universe,
                                                 std::size_t size, Rng& rng) {
  const DataConfig& data = universe.config();
  std::vector<double> weights(data.domains.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < data.domains.size(); ++i) {
    if (data.domains[i].present_in_central) {
      weights[i] = data.central_mix[i];
      total += weights[i];
    }
  }
  if (total <= 0.0) throw ConfigError("central domain mix is empty");
  std::vector<LabeledExample> dataset;
  dataset.reserve(size);
  for (std::size_t i = 0; i < size; ++i) {
    const std::size_t domain = weighted_pick(weights, rng);
    const bool positive = rng.bernoulli(data.positive_rate);
    dataset.push_back(universe.generate_example(domain, positive, rng));
  }
  return dataset;
}

namespace {

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{}) throw ConfigError(cat("bad number '", s, "' in population file"));
  return v;
}

}  // namespace

void export_population(const Population& population, const KeywordUniverse& universe,
                       const std::filesystem::path& records_path) {
  std::filesystem::path blob_path = records_path;
  blob_path += ".blob";
  std::ofstream records(records_path);
  std::ofstream blob(blob_path, std::ios::binary);
  if (!records || !blob) {
    throw std::runtime_error(cat("cannot write population snapshot to ", records_path.string()));
  }
  const DataConfig& data = universe.config();
  records << "fedkws-population v1\n";
  records << "clients " << population.clients.size() << " feature_dim " << data.feature_dim
          << " built_through_day " << population.built_through_day << "\n";
  records << "domains";
  for (const auto& d : data.domains) records << ' ' << d.name;
  records << "\n";
  std::uint64_t offset = 0;
  for (const auto& device : population.clients) {
    records << "client " << device.id << " " << device.charging << " " << device.idle << " "
            << device.unmetered << " cache_day " << device.cache.current_day() << " near_cap "
            << device.cache.near_cap() << " retention " << device.cache.retention_days()
            << " examples " << device.cache.size() << "\n";
    for (const auto& ex : device.cache.examples()) {
      const auto& truth = TruthOracle::truth(ex);
      const auto& fb = ex.feedback();
      records << "example domain=" << data.domain(truth.domain_index).name
              << " kind=" << (ex.kind() == ExampleKind::kActivation ? "activation" : "near")
              << " day=" << ex.day_added() << " accepted=" << fb.inference_accepted
              << " score=" << format_double(fb.inference_score) << " reattempt=" << fb.reattempt
              << " spkr=" << fb.speaker_id_accepted << " server=" << fb.server_accepted
              << " positive=" << truth.labels.is_positive << " eok="
              << (truth.labels.end_of_keyword ? std::to_string(*truth.labels.end_of_keyword)
                                              : std::string("-"))
              << " enc=";
      for (int c : truth.labels.encoder_class) records << c;
      records << " dec=";
      for (int c : truth.labels.decoder_class) records << c;
      const auto& frames = truth.features.frames;
      records << " blob=" << offset << ":" << frames.data.size() << ":" << frames.rows << "\n";
      blob.write(reinterpret_cast<const char*>(frames.data.data()),
                 static_cast<std::streamsize>(frames.data.size() * sizeof(double)));
      offset += frames.data.size();
    }
  }
}

Population import_population(const std::filesystem::path& records_path) {
  std::filesystem::path blob_path = records_path;
  blob_path += ".blob";
  std::ifstream records(records_path);
  std::ifstream blob(blob_path, std::ios::binary);
  if (!records || !blob) {
    throw std::runtime_error(cat("cannot read population snapshot from ", records_path.string()));
  }
  std::string line;
  std::getline(records, line);
  if (line != "fedkws-population v1") {
    throw ConfigError(cat("unrecognized population snapshot header '", line, "'"));
  }
  Population population;
  std::size_t n_clients = 0;
  std::size_t feature_dim = 0;
  {
    std::getline(records, line);
    std::istringstream meta(line);
    std::string k1, k2, k3;
    meta >> k1 >> n_clients >> k2 >> feature_dim >> k3 >> population.built_through_day;
    if (k1 != "clients" || k2 != "feature_dim") {
      throw ConfigError("malformed population snapshot metadata");
    }
  }
  // The stored domain table keeps indexes stable across round trips.
  std::vector<std::string> domain_names;
  {
    std::getline(records, line);
    std::istringstream domains_line(line);
    std::string tag, name;
    domains_line >> tag;
    if (tag != "domains") throw ConfigError("population snapshot is missing the domain table");
    while (domains_line >> name) domain_names.push_back(name);
  }
  const auto domain_id = [&](const std::string& name) {
    for (std::size_t i = 0; i < domain_names.size(); ++i) {
      if (domain_names[i] == name) return static_cast<std::uint32_t>(i);
    }
    throw ConfigError(cat("domain '", name, "' missing from the snapshot domain table"));
  };

  for (std::size_t c = 0; c < n_clients; ++c) {
    std::getline(records, line);
    std::istringstream head(line);
    std::string tag, skip;
    ClientDevice device;
    int cache_day = 0;
    int near_cap = 20;
    int retention = 63;
    std::size_t n_examples = 0;
    head >> tag >> device.id >> device.charging >> device.idle >> device.unmetered >> skip >>
        cache_day >> skip >> near_cap >> skip >> retention >> skip >> n_examples;
    if (tag != "client") throw ConfigError(cat("expected client record, got '", line, "'"));
    device.cache = ClientCache(near_cap, retention);

    for (std::size_t e = 0; e < n_examples; ++e) {
      std::getline(records, line);
      std::istringstream rec(line);
      rec >> tag;
      if (tag != "example") throw ConfigError(cat("expected example record, got '", line, "'"));
      std::string field;
      LabeledExample ex;
      FeedbackFeatures fb;
      ExampleKind kind = ExampleKind::kActivation;
      int day = 0;
      std::uint64_t blob_offset = 0;
      std::uint64_t blob_count = 0;
      std::uint64_t blob_rows = 0;
      std::string enc, dec, eok;
      while (rec >> field) {
        const auto pos = field.find('=');
        const std::string key = field.substr(0, pos);
        const std::string val = field.substr(pos + 1);
        if (key == "domain") {
          ex.domain_index = domain_id(val);
        } else if (key == "kind") {
          kind = val == "activation" ? ExampleKind::kActivation : ExampleKind::kNearActivation;
        } else if (key == "day") {
          day = std::stoi(val);
        } else if (key == "accepted") {
          fb.inference_accepted = val == "1";
        } else if (key == "score") {
          fb.inference_score = parse_double(val);
        } else if (key == "reattempt") {
          fb.reattempt = val == "1";
        } else if (key == "spkr") {
          fb.speaker_id_accepted = val == "1";
        } else if (key == "server") {
          fb.server_accepted = val == "1";
        } else if (key == "positive") {
          ex.labels.is_positive = val == "1";
        } else if (key == "eok") {
          eok = val;
        } else if (key == "enc") {
          enc = val;
        } else if (key == "dec") {
          dec = val;
        } else if (key == "blob") {
          char colon = 0;
          std::istringstream bs(val);
          bs >> blob_offset >> colon >> blob_count >> colon >> blob_rows;
        } else {
          throw ConfigError(cat("unknown field '", key, "' in population snapshot"));
        }
      }
      if (fb.server_accepted && !fb.inference_accepted) {
        throw ConfigError("snapshot violates server_accepted => inference_accepted");
      }
      if (eok != "-" && !eok.empty()) ex.labels.end_of_keyword = std::stoul(eok);
      for (char ch : enc) ex.labels.encoder_class.push_back(ch - '0');
      for (char ch : dec) ex.labels.decoder_class.push_back(ch - '0');
      ex.day = day;
      ex.features.frames = Tensor2(blob_rows, feature_dim);
      if (blob_count != blob_rows * feature_dim) {
        throw ConfigError("blob reference does not match the frame shape");
      }
      blob.seekg(static_cast<std::streamoff>(blob_offset * sizeof(double)));
      blob.read(reinterpret_cast<char*>(ex.features.frames.data.data()),
                static_cast<std::streamsize>(blob_count * sizeof(double)));
      if (!blob) throw std::runtime_error("population blob truncated");
      device.cache.add(CachedExample(std::move(ex), fb, kind), day);
    }
    device.cache.advance_to_day(population.built_through_day);
    population.clients.push_back(std::move(device));
  }
  return population;
}

}  // namespace fedkws
