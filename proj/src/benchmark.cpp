#include "dataprov/benchmark.hpp"

#include <algorithm>
#include <memory>
#include <set>

#include "dataprov/blackbox.hpp"
#include "dataprov/error.hpp"
#include "dataprov/kernels.hpp"
#include "dataprov/seed.hpp"
#include "json_io.hpp"

namespace dataprov::bench {
namespace {

using detail::json;
using detail::read_field;

// Stable 64-bit hash of an id, so seeds follow names rather than positions.
std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool is_generator(const BenchmarkConfig& config, const std::string& id) {
  return std::any_of(config.generators.begin(), config.generators.end(),
                     [&](const SourceSeed& g) { return g.id == id; });
}

std::string_view to_string(Transport t) { return t == Transport::kServed ? "served" : "in_process"; }
std::string_view to_string(GridMode g) { return g == GridMode::kFast ? "fast" : "full"; }

// What a suspect job covers: one trained model, checked by one or more defenders.
struct Job {
  std::string source;
  std::string data_defender;  // non-empty only for the defender-specific mixed source
  SuspectPlan plan;
  std::vector<std::size_t> defenders;  // indices into the resolved defender list
};

metrics::CellRecord failed_cell(const std::string& defender, const Job& job, std::size_t replicate,
                                const std::string& variant, const std::string& why) {
  metrics::CellRecord c;
  c.defender = defender;
  c.source = job.source;
  c.replicate = replicate;
  c.suspect_index = job.plan.index;
  c.variant = variant;
  c.truth = truth_for(job.source, defender);
  c.g = c.g0 = c.score = c.suspect_mean = c.shadow_mean = std::numeric_limits<double>::quiet_NaN();
  c.status = "failed: " + why;
  return c;
}

}  // namespace

void BenchmarkConfig::validate() const {
  if (replicates == 0) throw Error(ErrorCode::kInvalidConfig, "replicates must be at least 1");
  world.validate();
  if (generators.empty()) throw Error(ErrorCode::kInvalidConfig, "at least one generator is required");
  std::set<std::string> ids;
  for (const auto& g : generators) {
    if (g.id.empty() || g.id.find_first_of(",\n\r") != std::string::npos) {
      throw Error(ErrorCode::kInvalidConfig, "generator id '" + g.id + "' must be non-empty and comma-free");
    }
    if (g.id == kRealSource || g.id == kMixedSource || g.id == "average") {
      throw Error(ErrorCode::kInvalidConfig, "generator id '" + g.id + "' is reserved");
    }
    if (!ids.insert(g.id).second) throw Error(ErrorCode::kInvalidConfig, "duplicate generator id '" + g.id + "'");
  }
  const auto srcs = resolved_sources();
  if (srcs.size() < 2) throw Error(ErrorCode::kInvalidConfig, "a benchmark needs at least two sources");
  for (const auto& s : srcs) {
    if (s != kRealSource && s != kMixedSource && !is_generator(*this, s)) {
      throw Error(ErrorCode::kInvalidConfig, "unknown source '" + s + "'");
    }
  }
  for (const auto& d : resolved_defenders()) {
    if (!is_generator(*this, d)) throw Error(ErrorCode::kInvalidConfig, "defender '" + d + "' is not a generator");
  }
  if (variants.empty()) throw Error(ErrorCode::kInvalidConfig, "no variants selected");
  for (const auto& v : variants) {
    if (v == kRandomVariant) continue;
    const auto parsed = verifier::parse_variant(v);
    if (verifier::needs_logits(parsed) && !verification.logit_access) {
      throw Error(ErrorCode::kInvalidConfig, v + " variant needs logit access to the suspects");
    }
  }
  verification.validate(world.num_classes);
  if (suspect_prompt == verification.shadow_prompt || suspect_prompt == verification.validation_prompt) {
    throw Error(ErrorCode::kInvalidConfig, "suspect prompt must differ from the shadow and validation prompts");
  }
  if (suspects.n_per_class == 0 || suspects.epochs == 0) {
    throw Error(ErrorCode::kInvalidConfig, "suspects need n_per_class >= 1 and epochs >= 1");
  }
  if (suspects.hidden_widths.empty() || suspects.batch_sizes.empty() || suspects.learning_rates.empty() ||
      suspects.weight_decays.empty() || suspects.losses.empty()) {
    throw Error(ErrorCode::kInvalidConfig, "every suspect grid axis needs at least one value");
  }
  for (const auto& plan : suspect_grid(suspects, grid)) plan.train.validate();
}

std::vector<std::string> BenchmarkConfig::resolved_sources() const {
  if (!sources.empty()) return sources;
  std::vector<std::string> out;
  for (const auto& g : generators) out.push_back(g.id);
  out.push_back(kRealSource);
  if (mixed) out.push_back(kMixedSource);
  return out;
}

std::vector<std::string> BenchmarkConfig::resolved_defenders() const {
  if (!defenders.empty()) return defenders;
  std::vector<std::string> out;
  for (const auto& g : generators) out.push_back(g.id);
  return out;
}

BenchmarkConfig config_from_json(const std::string& text) {
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::kParse, "benchmark config is not valid JSON");
  detail::reject_unknown_keys(j, "benchmark config",
                              {"seed", "replicates", "world", "generators", "real_seed", "sources", "defenders",
                               "mixed", "suspect_prompt", "suspects", "grid", "verification", "variants",
                               "transport", "workers"});
  BenchmarkConfig c;
  read_field(j, "seed", c.seed);
  read_field(j, "replicates", c.replicates);
  read_field(j, "real_seed", c.real_seed);
  read_field(j, "sources", c.sources);
  read_field(j, "defenders", c.defenders);
  read_field(j, "mixed", c.mixed);
  read_field(j, "variants", c.variants);
  read_field(j, "workers", c.workers);
  if (j.contains("world")) c.world = detail::world_from_json(j["world"]);
  if (j.contains("generators")) {
    if (!j["generators"].is_array()) throw Error(ErrorCode::kInvalidConfig, "'generators' must be an array");
    c.generators.clear();
    for (const auto& g : j["generators"]) {
      detail::reject_unknown_keys(g, "generator", {"id", "seed"});
      SourceSeed s;
      read_field(g, "id", s.id);
      read_field(g, "seed", s.seed);
      c.generators.push_back(s);
    }
  }
  if (j.contains("suspect_prompt")) c.suspect_prompt = detail::prompt_from_json(j["suspect_prompt"], c.suspect_prompt);
  if (j.contains("suspects")) {
    const auto& s = j["suspects"];
    detail::reject_unknown_keys(s, "suspects",
                                {"n_per_class", "epochs", "hidden_widths", "batch_sizes", "learning_rates",
                                 "weight_decays", "losses"});
    read_field(s, "n_per_class", c.suspects.n_per_class);
    read_field(s, "epochs", c.suspects.epochs);
    read_field(s, "hidden_widths", c.suspects.hidden_widths);
    read_field(s, "batch_sizes", c.suspects.batch_sizes);
    read_field(s, "learning_rates", c.suspects.learning_rates);
    read_field(s, "weight_decays", c.suspects.weight_decays);
    if (s.contains("losses")) {
      c.suspects.losses.clear();
      for (const auto& l : s["losses"]) c.suspects.losses.push_back(detail::loss_from_json(l));
    }
  }
  if (j.contains("grid")) {
    const auto g = j["grid"].get<std::string>();
    if (g != "fast" && g != "full") throw Error(ErrorCode::kInvalidConfig, "grid must be \"fast\" or \"full\"");
    c.grid = g == "fast" ? GridMode::kFast : GridMode::kFull;
  }
  if (j.contains("transport")) {
    const auto t = j["transport"].get<std::string>();
    if (t != "in_process" && t != "served") {
      throw Error(ErrorCode::kInvalidConfig, "transport must be \"in_process\" or \"served\"");
    }
    c.transport = t == "served" ? Transport::kServed : Transport::kInProcess;
  }
  if (j.contains("verification")) c.verification = detail::verification_config_from_json(j["verification"]);
  c.validate();
  return c;
}

BenchmarkConfig load_config(const std::filesystem::path& path) {
  return config_from_json(metrics::read_text_file(path));
}

std::string config_to_json(const BenchmarkConfig& c) {
  json generators = json::array();
  for (const auto& g : c.generators) generators.push_back({{"id", g.id}, {"seed", g.seed}});
  json losses = json::array();
  for (const auto& l : c.suspects.losses) losses.push_back(detail::to_json(l));
  json j{{"seed", c.seed},
         {"replicates", c.replicates},
         {"world", detail::to_json(c.world)},
         {"generators", generators},
         {"real_seed", c.real_seed},
         {"sources", c.resolved_sources()},
         {"defenders", c.resolved_defenders()},
         {"mixed", c.mixed},
         {"suspect_prompt", detail::to_json(c.suspect_prompt)},
         {"suspects",
          {{"n_per_class", c.suspects.n_per_class},
           {"epochs", c.suspects.epochs},
           {"hidden_widths", c.suspects.hidden_widths},
           {"batch_sizes", c.suspects.batch_sizes},
           {"learning_rates", c.suspects.learning_rates},
           {"weight_decays", c.suspects.weight_decays},
           {"losses", losses}}},
         {"grid", to_string(c.grid)},
         {"verification", detail::to_json(c.verification)},
         {"variants", c.variants},
         {"transport", to_string(c.transport)},
         {"workers", c.workers}};
  return j.dump(2);
}

std::vector<SuspectPlan> suspect_grid(const SuspectSettings& s, GridMode mode) {
  std::vector<SuspectPlan> plans;
  auto push = [&](std::size_t width, std::size_t batch, double lr, double wd, const learner::LossSpec& loss) {
    SuspectPlan p;
    p.index = plans.size();
    p.hidden_width = width;
    p.train.epochs = s.epochs;
    p.train.batch_size = batch;
    p.train.learning_rate = lr;
    p.train.weight_decay = wd;
    p.train.loss = loss;
    plans.push_back(p);
  };
  if (mode == GridMode::kFull) {
    for (auto width : s.hidden_widths)
      for (auto batch : s.batch_sizes)
        for (auto lr : s.learning_rates)
          for (auto wd : s.weight_decays)
            for (const auto& loss : s.losses) push(width, batch, lr, wd, loss);
    return plans;
  }
  auto pick = [](const auto& axis, std::size_t k) { return axis[std::min(k, axis.size() - 1)]; };
  for (auto width : s.hidden_widths)
    for (std::size_t k = 0; k < 2; ++k)
      for (const auto& loss : s.losses)
        push(width, pick(s.batch_sizes, k), pick(s.learning_rates, k), pick(s.weight_decays, k), loss);
  return plans;
}

const synth::GeneratorSpec& World::generator(const std::string& id) const {
  for (const auto& g : generators) {
    if (g.id == id) return g;
  }
  throw Error(ErrorCode::kInvalidConfig, "no generator '" + id + "'");
}

std::uint64_t replicate_seed(const BenchmarkConfig& config, std::size_t replicate) {
  return derive_seed(config.seed, {replicate});
}

World build_world(const BenchmarkConfig& config, std::size_t replicate) {
  World w;
  w.replicate = replicate;
  w.seed = replicate_seed(config, replicate);
  const Matrix prototypes = synth::make_prototypes(config.world);
  for (const auto& g : config.generators) {
    w.generators.push_back(synth::make_generator(g.id, config.world, prototypes, derive_seed(g.seed, {replicate})));
  }
  w.real = synth::make_real_source(kRealSource, config.world, prototypes, derive_seed(config.real_seed, {replicate}));
  return w;
}

synth::LabeledDataset source_dataset(const BenchmarkConfig& config, const World& world, const std::string& source,
                                     const std::string& defender) {
  const bool mixed = source == kMixedSource;
  const std::uint64_t seed =
      derive_seed(world.seed, {name_hash("data"), name_hash(source), name_hash(mixed ? defender : "")});
  const auto& world_params = config.world;
  const auto prompt = config.suspect_prompt.build(world_params.num_classes, world_params.dim);
  const std::size_t n = config.suspects.n_per_class;
  if (source == kRealSource) return synth::sample_real(world.real, n, seed);
  if (mixed) {
    const std::size_t n_synth = (n + 1) / 2;
    auto a = synth::sample_synthetic(world.generator(defender), prompt, n_synth, derive_seed(seed, {1}));
    if (n - n_synth == 0) return a;
    auto b = synth::sample_real(world.real, n - n_synth, derive_seed(seed, {2}));
    return synth::mix_datasets(a, b, derive_seed(seed, {3}));
  }
  return synth::sample_synthetic(world.generator(source), prompt, n, seed);
}

std::uint64_t shadow_seed(const World& world, const std::string& defender) {
  return derive_seed(world.seed, {name_hash("shadow"), name_hash(defender)});
}

std::uint64_t suspect_seed(const World& world, const std::string& source, const std::string& defender,
                           std::size_t suspect_index) {
  const bool mixed = source == kMixedSource;
  return derive_seed(world.seed,
                     {name_hash("suspect"), name_hash(source), name_hash(mixed ? defender : ""), suspect_index});
}

std::pair<learner::MlpClassifier, learner::TrainConfig> suspect_setup(const BenchmarkConfig& config,
                                                                     const World& world, const SuspectPlan& plan,
                                                                     const std::string& source,
                                                                     const std::string& defender) {
  const std::uint64_t seed = suspect_seed(world, source, defender, plan.index);
  learner::TrainConfig train = plan.train;
  train.shuffle_seed = derive_seed(seed, {2});
  learner::MlpClassifier model(config.world.dim, plan.hidden_width, config.world.num_classes, derive_seed(seed, {1}));
  return {std::move(model), train};
}

verifier::Verdict truth_for(const std::string& source, const std::string& defender) {
  return source == defender || source == kMixedSource ? verifier::Verdict::kIllegal : verifier::Verdict::kLegal;
}

BenchmarkResult run_benchmark(const BenchmarkConfig& config) {
  config.validate();
  const auto sources = config.resolved_sources();
  const auto defenders = config.resolved_defenders();
  const auto plans = suspect_grid(config.suspects, config.grid);
  const int workers = config.workers == 0 ? kernels::available_threads() : static_cast<int>(config.workers);

  std::vector<verifier::Variant> tested;
  bool with_random = false;
  for (const auto& v : config.variants) {
    if (v == kRandomVariant) with_random = true;
    else tested.push_back(verifier::parse_variant(v));
  }
  const bool any_logits =
      std::any_of(tested.begin(), tested.end(), [](verifier::Variant v) { return verifier::needs_logits(v); });
  const auto mode = any_logits ? blackbox::PredictMode::kLogits : blackbox::PredictMode::kLabels;

  BenchmarkResult result;
  json manifest_reps = json::array();

  for (std::size_t rep = 0; rep < config.replicates; ++rep) {
    const World world = build_world(config, rep);

    // One shadow reference per defender, shared by every suspect of the replicate.
    std::vector<std::unique_ptr<verifier::ShadowReference>> shadows(defenders.size());
    std::vector<std::string> shadow_errors(defenders.size());
    const auto n_defenders = static_cast<std::int64_t>(defenders.size());
#pragma omp parallel for schedule(dynamic) num_threads(workers)
    for (std::int64_t d = 0; d < n_defenders; ++d) {
      const auto& id = defenders[static_cast<std::size_t>(d)];
      try {
        shadows[static_cast<std::size_t>(d)] = std::make_unique<verifier::ShadowReference>(
            world.generator(id), config.verification, shadow_seed(world, id));
      } catch (const std::exception& e) {
        shadow_errors[static_cast<std::size_t>(d)] = e.what();
      }
    }

    std::vector<Job> jobs;
    std::vector<std::pair<std::string, std::string>> data_keys;
    for (const auto& source : sources) {
      if (source == kMixedSource) {
        for (std::size_t d = 0; d < defenders.size(); ++d) {
          data_keys.emplace_back(source, defenders[d]);
          for (const auto& plan : plans) jobs.push_back({source, defenders[d], plan, {d}});
        }
      } else {
        std::vector<std::size_t> all(defenders.size());
        for (std::size_t d = 0; d < all.size(); ++d) all[d] = d;
        data_keys.emplace_back(source, "");
        for (const auto& plan : plans) jobs.push_back({source, "", plan, all});
      }
    }
    std::vector<synth::LabeledDataset> datasets(data_keys.size());
    std::vector<std::string> data_errors(data_keys.size());
    for (std::size_t k = 0; k < data_keys.size(); ++k) {
      try {
        datasets[k] = source_dataset(config, world, data_keys[k].first, data_keys[k].second);
      } catch (const std::exception& e) {
        data_errors[k] = e.what();
      }
    }
    auto data_index = [&](const Job& job) {
      for (std::size_t k = 0; k < data_keys.size(); ++k) {
        if (data_keys[k].first == job.source && data_keys[k].second == job.data_defender) return k;
      }
      return data_keys.size();
    };

    std::vector<std::vector<metrics::CellRecord>> job_cells(jobs.size());
    const auto n_jobs = static_cast<std::int64_t>(jobs.size());
#pragma omp parallel for schedule(dynamic) num_threads(workers)
    for (std::int64_t j = 0; j < n_jobs; ++j) {
      const Job& job = jobs[static_cast<std::size_t>(j)];
      auto& out = job_cells[static_cast<std::size_t>(j)];
      auto fail_all = [&](std::size_t d, const std::string& why) {
        for (auto v : tested) out.push_back(failed_cell(defenders[d], job, rep, std::string(verifier::to_string(v)), why));
        if (with_random) out.push_back(failed_cell(defenders[d], job, rep, kRandomVariant, why));
      };

      std::shared_ptr<const learner::MlpClassifier> model;
      std::string train_error;
      const std::size_t k = data_index(job);
      if (!data_errors[k].empty()) {
        train_error = "data: " + data_errors[k];
      } else {
        try {
          auto [init, train_config] = suspect_setup(config, world, job.plan, job.source, job.data_defender);
          model = std::make_shared<const learner::MlpClassifier>(
              learner::train(std::move(init), datasets[k], train_config).first);
        } catch (const std::exception& e) {
          train_error = std::string("train: ") + e.what();
        }
      }
      if (!model) {
        for (auto d : job.defenders) fail_all(d, train_error);
        continue;
      }

      std::unique_ptr<blackbox::PredictServer> server;
      std::unique_ptr<blackbox::PredictionService> service;
      try {
        if (config.transport == Transport::kServed) {
          server = std::make_unique<blackbox::PredictServer>(model);
          service = std::make_unique<blackbox::HttpPredictionService>(server->endpoint());
        } else {
          service = std::make_unique<blackbox::InProcessService>(model);
        }
      } catch (const std::exception& e) {
        for (auto d : job.defenders) fail_all(d, std::string("serve: ") + e.what());
        continue;
      }

      const std::uint64_t seed = suspect_seed(world, job.source, job.data_defender, job.plan.index);
      for (auto d : job.defenders) {
        const auto& defender = defenders[d];
        const auto* shadow = shadows[d].get();
        if (!shadow) {
          fail_all(d, "shadow: " + shadow_errors[d]);
          continue;
        }
        std::vector<blackbox::PredictResponse> responses;
        if (!tested.empty()) {
          try {
            responses = blackbox::query_batches(*service, shadow->validation_data().features,
                                                config.verification.inference_batch_size, mode);
          } catch (const std::exception& e) {
            fail_all(d, std::string("query: ") + e.what());
            continue;
          }
        }
        for (auto v : tested) {
          const std::string name(verifier::to_string(v));
          try {
            const auto report = shadow->assess_responses(responses, v);
            metrics::CellRecord c;
            c.defender = defender;
            c.source = job.source;
            c.replicate = rep;
            c.suspect_index = job.plan.index;
            c.variant = name;
            c.truth = truth_for(job.source, defender);
            c.verdict = report.verdict;
            c.g = report.grubbs.g;
            c.g0 = report.grubbs.g0;
            c.score = report.illegality_score;
            c.suspect_mean = report.suspect_mean;
            c.shadow_mean = report.shadow_mean;
            c.status = report.zero_variance ? "zero_variance" : "ok";
            out.push_back(std::move(c));
          } catch (const std::exception& e) {
            out.push_back(failed_cell(defender, job, rep, name, e.what()));
          }
        }
        if (with_random) {
          metrics::CellRecord c;
          c.defender = defender;
          c.source = job.source;
          c.replicate = rep;
          c.suspect_index = job.plan.index;
          c.variant = kRandomVariant;
          c.truth = truth_for(job.source, defender);
          c.verdict = verifier::random_verify(derive_seed(seed, {name_hash("random"), name_hash(defender)}));
          c.g = c.g0 = c.suspect_mean = c.shadow_mean = std::numeric_limits<double>::quiet_NaN();
          c.score = c.verdict == verifier::Verdict::kIllegal ? 1.0 : 0.0;
          out.push_back(std::move(c));
        }
      }
    }

    json suspects = json::array();
    for (const auto& job : jobs) {
      const auto setup = suspect_setup(config, world, job.plan, job.source, job.data_defender);
      suspects.push_back({{"source", job.source},
                          {"data_defender", job.data_defender},
                          {"index", job.plan.index},
                          {"hidden_width", job.plan.hidden_width},
                          {"init_seed", setup.first.init_seed()},
                          {"train", detail::to_json(setup.second)}});
    }
    json generator_seeds = json::object();
    for (const auto& g : world.generators) generator_seeds[g.id] = g.seed;
    json shadow_seeds = json::object();
    for (const auto& d : defenders) shadow_seeds[d] = shadow_seed(world, d);
    manifest_reps.push_back({{"replicate", rep},
                             {"seed", world.seed},
                             {"generator_seeds", generator_seeds},
                             {"real_seed", world.real.seed},
                             {"shadow_seeds", shadow_seeds},
                             {"suspects", suspects}});

    for (auto& cells : job_cells) {
      for (auto& c : cells) {
        result.failed_cells += c.failed();
        result.cells.push_back(std::move(c));
      }
    }
  }

  result.summary = metrics::summarize(result.cells);

  json truth = json::array();
  for (const auto& d : defenders) {
    for (const auto& s : sources) truth.push_back({{"defender", d}, {"source", s}, {"truth", verifier::to_string(truth_for(s, d))}});
  }
  json manifest{{"config", json::parse(config_to_json(config))},
                {"suspects_per_source", plans.size()},
                {"cell_count", result.cells.size()},
                {"failed_cells", result.failed_cells},
                {"truth", truth},
                {"replicates", manifest_reps}};
  result.manifest_json = manifest.dump(2) + "\n";
  return result;
}

void write_outputs(const BenchmarkResult& result, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  metrics::write_text_file(out_dir / "cells.csv", metrics::cells_to_csv(result.cells));
  metrics::write_text_file(out_dir / "summary.csv", metrics::summary_to_csv(result.summary));
  metrics::write_text_file(out_dir / "manifest.json", result.manifest_json);
}

}  // namespace dataprov::bench
