#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include <json.hpp>

#include "dataprov/benchmark.hpp"
#include "dataprov/error.hpp"

using namespace dataprov;
using namespace dataprov::bench;

namespace {

// Small enough to run in a few seconds.
BenchmarkConfig tiny_config() {
  BenchmarkConfig c;
  c.replicates = 1;
  c.grid = GridMode::kFast;
  c.sources = {"gen_a", "real"};
  c.defenders = {"gen_a", "gen_b"};
  c.suspects.n_per_class = 60;
  c.suspects.epochs = 3;
  c.suspects.hidden_widths = {0, 16};
  c.verification.shadow_n_per_class = 80;
  c.verification.val_n_per_class = 30;
  c.verification.shadow_train.epochs = 4;
  return c;
}

}  // namespace

TEST(Grid, Sizes) {
  const SuspectSettings s;
  const auto full = suspect_grid(s, GridMode::kFull);
  const auto fast = suspect_grid(s, GridMode::kFast);
  ASSERT_EQ(full.size(), 64u);
  ASSERT_EQ(fast.size(), 16u);
  std::set<std::size_t> widths;
  std::set<std::string> losses;
  for (std::size_t i = 0; i < fast.size(); ++i) {
    EXPECT_EQ(fast[i].index, i);
    widths.insert(fast[i].hidden_width);
    losses.insert(learner::to_string(fast[i].train.loss));
  }
  EXPECT_EQ(widths.size(), 4u);
  EXPECT_EQ(losses.size(), 2u);
  std::set<std::tuple<std::size_t, std::size_t, double, double, std::string>> distinct;
  for (const auto& p : full) {
    distinct.insert({p.hidden_width, p.train.batch_size, p.train.learning_rate, p.train.weight_decay,
                     learner::to_string(p.train.loss)});
    EXPECT_EQ(p.train.epochs, s.epochs);
  }
  EXPECT_EQ(distinct.size(), 64u);
}

TEST(Config, DefaultsResolve) {
  const BenchmarkConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.resolved_sources(), (std::vector<std::string>{"gen_a", "gen_b", "gen_c", "gen_d", "real"}));
  EXPECT_EQ(c.resolved_defenders().size(), 4u);
  BenchmarkConfig m;
  m.mixed = true;
  EXPECT_EQ(m.resolved_sources().back(), "mixed");
}

TEST(Config, JsonRoundTrip) {
  auto c = tiny_config();
  c.seed = 99;
  c.transport = Transport::kServed;
  c.suspects.losses = {learner::LossSpec::focal(1.5, 0.5)};
  const auto text = config_to_json(c);
  const auto back = config_from_json(text);
  EXPECT_EQ(config_to_json(back), text);
  EXPECT_EQ(back.seed, 99u);
  EXPECT_EQ(back.transport, Transport::kServed);
  EXPECT_EQ(back.suspects.losses.front(), learner::LossSpec::focal(1.5, 0.5));
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(config_from_json("{\"bogus\": 1}"), Error);
  EXPECT_THROW(config_from_json("{\"grid\": \"medium\"}"), Error);
  EXPECT_THROW(config_from_json("{\"sources\": [\"gen_a\"]}"), Error);
  EXPECT_THROW(config_from_json("{\"generators\": [{\"id\": \"real\", \"seed\": 1}, {\"id\": \"x\", \"seed\": 2}]}"),
               Error);
  EXPECT_THROW(config_from_json("not json"), Error);
}

TEST(Truth, Labels) {
  EXPECT_EQ(truth_for("gen_a", "gen_a"), verifier::Verdict::kIllegal);
  EXPECT_EQ(truth_for("gen_b", "gen_a"), verifier::Verdict::kLegal);
  EXPECT_EQ(truth_for("real", "gen_a"), verifier::Verdict::kLegal);
  EXPECT_EQ(truth_for("mixed", "gen_a"), verifier::Verdict::kIllegal);
}

TEST(World, SeedsAreStableAndDistinct) {
  const BenchmarkConfig c;
  const auto w0 = build_world(c, 0);
  const auto w0b = build_world(c, 0);
  const auto w1 = build_world(c, 1);
  EXPECT_EQ(w0.seed, w0b.seed);
  EXPECT_NE(w0.seed, w1.seed);
  EXPECT_EQ(w0.generator("gen_a").transform, w0b.generator("gen_a").transform);
  EXPECT_NE(w0.generator("gen_a").seed, w1.generator("gen_a").seed);
  EXPECT_THROW(w0.generator("nope"), Error);
  EXPECT_NE(shadow_seed(w0, "gen_a"), shadow_seed(w0, "gen_b"));
  EXPECT_NE(suspect_seed(w0, "gen_a", "", 0), suspect_seed(w0, "gen_a", "", 1));
  EXPECT_NE(suspect_seed(w0, "mixed", "gen_a", 0), suspect_seed(w0, "mixed", "gen_b", 0));
}

TEST(Data, MixedSourceHalvesEachPart) {
  BenchmarkConfig c;
  c.suspects.n_per_class = 41;
  const auto w = build_world(c, 0);
  const auto mixed = source_dataset(c, w, "mixed", "gen_a");
  EXPECT_EQ(mixed.size(), 410u);
  for (auto n : mixed.class_counts()) EXPECT_EQ(n, 41u);
  EXPECT_EQ(source_dataset(c, w, "real", "").size(), 410u);
  EXPECT_EQ(source_dataset(c, w, "real", "").features, source_dataset(c, w, "real", "gen_b").features);
  EXPECT_THROW(source_dataset(c, w, "mixed", ""), Error);
}

TEST(Run, SmokeSchemaAndDeterminism) {
  const auto c = tiny_config();
  const auto a = run_benchmark(c);
  EXPECT_EQ(a.failed_cells, 0u);
  // 2 widths x 2 paired settings x 2 losses = 8 suspects per source.
  ASSERT_EQ(suspect_grid(c.suspects, c.grid).size(), 8u);
  // 2 sources x 8 suspects x 2 defenders x 4 variants.
  EXPECT_EQ(a.cells.size(), 2u * 8 * 2 * 4);
  for (const auto& cell : a.cells) {
    EXPECT_EQ(cell.truth, truth_for(cell.source, cell.defender));
    EXPECT_FALSE(cell.failed());
  }
  // 2 defenders x 4 variants + 4 average rows.
  EXPECT_EQ(a.summary.size(), 12u);

  const auto manifest = nlohmann::json::parse(a.manifest_json);
  EXPECT_EQ(manifest["cell_count"], a.cells.size());
  EXPECT_EQ(manifest["failed_cells"], 0);
  ASSERT_EQ(manifest["truth"].size(), 4u);
  for (const auto& t : manifest["truth"]) {
    EXPECT_EQ(t["truth"], verifier::to_string(truth_for(t["source"], t["defender"])));
  }
  EXPECT_EQ(manifest["replicates"][0]["suspects"].size(), 16u);

  const auto b = run_benchmark(c);
  EXPECT_EQ(metrics::cells_to_csv(a.cells), metrics::cells_to_csv(b.cells));
  EXPECT_EQ(a.manifest_json, b.manifest_json);

  const auto dir = std::filesystem::temp_directory_path() / "dataprov_bench_smoke";
  std::filesystem::remove_all(dir);
  write_outputs(a, dir);
  for (const char* f : {"cells.csv", "summary.csv", "manifest.json"}) EXPECT_TRUE(std::filesystem::exists(dir / f));
  EXPECT_EQ(metrics::read_text_file(dir / "summary.csv"), metrics::summary_to_csv(a.summary));
  std::filesystem::remove_all(dir);
}

TEST(Run, ServedMatchesInProcess) {
  auto c = tiny_config();
  c.defenders = {"gen_a"};
  c.suspects.hidden_widths = {0, 16, 32, 8};
  const auto in_process = run_benchmark(c);
  c.transport = Transport::kServed;
  const auto served = run_benchmark(c);
  EXPECT_EQ(metrics::cells_to_csv(in_process.cells), metrics::cells_to_csv(served.cells));
}
