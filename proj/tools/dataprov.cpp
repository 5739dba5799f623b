// Command-line front end: generate, train, serve, verify, benchmark, report.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dataprov/benchmark.hpp"
#include "dataprov/blackbox.hpp"
#include "dataprov/error.hpp"
#include "dataprov/metrics.hpp"
#include "dataprov/mlp.hpp"
#include "dataprov/synth.hpp"
#include "dataprov/verifier.hpp"

namespace fs = std::filesystem;
using namespace dataprov;

namespace {

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::string out_dir = ".";
  bool fast = false;
};

bench::BenchmarkConfig load_benchmark_config(const GlobalOptions& g) {
  bench::BenchmarkConfig config = g.config_path.empty() ? bench::BenchmarkConfig{} : bench::load_config(g.config_path);
  if (g.seed) config.seed = *g.seed;
  if (g.fast) config.grid = bench::GridMode::kFast;
  return config;
}

fs::path out_file(const GlobalOptions& g, const std::string& name) {
  fs::create_directories(g.out_dir);
  return fs::path(g.out_dir) / name;
}

std::atomic<blackbox::PredictServer*> g_server{nullptr};

extern "C" void handle_stop(int) {
  if (auto* s = g_server.load()) s->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Training-data provenance verification for black-box classifiers"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--seed", g.seed, "Override the base seed of the configuration");
  app.add_option("--config", g.config_path, "Benchmark/world configuration (JSON)")->check(CLI::ExistingFile);
  app.add_option("--out", g.out_dir, "Output directory");
  app.add_flag("--fast", g.fast, "Use the reduced 16-suspect grid");

  // generate
  auto* gen = app.add_subcommand("generate", "Write a dataset CSV");
  std::string gen_role = "suspect";
  std::string gen_source;
  std::string gen_defender;
  std::size_t gen_replicate = 0;
  std::string gen_file = "dataset.csv";
  gen->add_option("--role", gen_role, "suspect | shadow | validation")
      ->check(CLI::IsMember({"suspect", "shadow", "validation"}));
  gen->add_option("--source", gen_source, "Generator id, real or mixed (suspect role)");
  gen->add_option("--defender", gen_defender, "Defender generator (mixed source, shadow and validation roles)");
  gen->add_option("--replicate", gen_replicate, "Replicate index");
  gen->add_option("--file", gen_file, "File name inside --out");

  // train
  auto* trn = app.add_subcommand("train", "Train a classifier and write a checkpoint");
  std::string trn_data;
  std::string trn_source;
  std::string trn_defender;
  std::size_t trn_replicate = 0;
  std::optional<std::size_t> trn_suspect;
  bool trn_shadow = false;
  std::size_t trn_width = 64;
  std::uint64_t trn_init_seed = 1;
  learner::TrainConfig trn_config;
  std::string trn_loss = "ce";
  std::string trn_file = "model.ckpt";
  trn->add_option("--data", trn_data, "Training dataset CSV")->check(CLI::ExistingFile);
  trn->add_option("--suspect-index", trn_suspect, "Train grid suspect #i of the benchmark (needs --source)");
  trn->add_flag("--shadow", trn_shadow, "Train the defender's shadow model (needs --defender)");
  trn->add_option("--source", trn_source, "Suspect data source");
  trn->add_option("--defender", trn_defender, "Defender generator id");
  trn->add_option("--replicate", trn_replicate, "Replicate index");
  trn->add_option("--hidden", trn_width, "Hidden width for a custom model (0 = linear)");
  trn->add_option("--init-seed", trn_init_seed, "Initialization seed for a custom model");
  trn->add_option("--epochs", trn_config.epochs);
  trn->add_option("--batch-size", trn_config.batch_size);
  trn->add_option("--lr", trn_config.learning_rate);
  trn->add_option("--wd", trn_config.weight_decay);
  trn->add_option("--loss", trn_loss)->check(CLI::IsMember({"ce", "focal"}));
  trn->add_option("--shuffle-seed", trn_config.shuffle_seed);
  trn->add_option("--file", trn_file, "Checkpoint file name inside --out");

  // serve
  auto* srv = app.add_subcommand("serve", "Serve a checkpoint on POST /predict");
  std::string srv_model;
  std::string srv_host = "127.0.0.1";
  std::uint16_t srv_port = 0;
  std::string srv_port_file;
  srv->add_option("--model", srv_model, "Checkpoint file")->required()->check(CLI::ExistingFile);
  srv->add_option("--host", srv_host);
  srv->add_option("--port", srv_port, "0 picks a free port");
  srv->add_option("--port-file", srv_port_file, "Write the bound port here once listening");

  // verify
  auto* ver = app.add_subcommand("verify", "Verify one suspect endpoint");
  std::string ver_endpoint;
  std::string ver_defender;
  std::size_t ver_replicate = 0;
  std::string ver_variant;
  ver->add_option("--endpoint", ver_endpoint, "host:port of the suspect")->required();
  ver->add_option("--defender", ver_defender, "Defender generator id (default: first generator)");
  ver->add_option("--replicate", ver_replicate, "Replicate index");
  ver->add_option("--variant", ver_variant, "accuracy | entropy | similarity");

  // benchmark
  auto* bch = app.add_subcommand("benchmark", "Run the full verification sweep");
  std::optional<std::size_t> bch_replicates;
  std::optional<std::string> bch_transport;
  bch->add_option("--replicates", bch_replicates);
  bch->add_option("--transport", bch_transport)->check(CLI::IsMember({"in_process", "served"}));

  // report
  auto* rep = app.add_subcommand("report", "Recompute the summary table from cells.csv");
  std::string rep_cells;
  rep->add_option("--cells", rep_cells, "cells.csv of a benchmark run")->required()->check(CLI::ExistingFile);

  for (auto* sub : {gen, trn, srv, ver, bch, rep}) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const auto config = load_benchmark_config(g);
      const auto world = bench::build_world(config, gen_replicate);
      synth::LabeledDataset data;
      if (gen_role == "suspect") {
        if (gen_source.empty()) throw Error(ErrorCode::kInvalidConfig, "--source is required for suspect data");
        data = bench::source_dataset(config, world, gen_source, gen_defender);
      } else {
        if (gen_defender.empty()) throw Error(ErrorCode::kInvalidConfig, "--defender is required");
        const verifier::ShadowReference ref(world.generator(gen_defender), config.verification,
                                            bench::shadow_seed(world, gen_defender));
        data = gen_role == "shadow" ? ref.shadow_data() : ref.validation_data();
      }
      const auto path = out_file(g, gen_file);
      synth::write_dataset_csv(path, data);
      std::cout << path.string() << "\n";
      return 0;
    }

    if (trn->parsed()) {
      const auto config = load_benchmark_config(g);
      const auto world = bench::build_world(config, trn_replicate);
      std::optional<learner::MlpClassifier> init;
      learner::TrainConfig tc = trn_config;
      synth::LabeledDataset data;
      if (trn_shadow) {
        if (trn_defender.empty()) throw Error(ErrorCode::kInvalidConfig, "--shadow needs --defender");
        const verifier::ShadowReference ref(world.generator(trn_defender), config.verification,
                                            bench::shadow_seed(world, trn_defender));
        learner::save_checkpoint(out_file(g, trn_file), *ref.shadow_model());
        std::cout << "shadow train accuracy "
                  << learner::dataset_accuracy(*ref.shadow_model(), ref.shadow_data()) << "\n";
        return 0;
      }
      if (trn_suspect) {
        if (trn_source.empty()) throw Error(ErrorCode::kInvalidConfig, "--suspect-index needs --source");
        const auto plans = bench::suspect_grid(config.suspects, config.grid);
        if (*trn_suspect >= plans.size()) throw Error(ErrorCode::kInvalidConfig, "suspect index out of range");
        auto setup = bench::suspect_setup(config, world, plans[*trn_suspect], trn_source, trn_defender);
        init.emplace(std::move(setup.first));
        tc = setup.second;
        data = trn_data.empty() ? bench::source_dataset(config, world, trn_source, trn_defender)
                                : synth::read_dataset_csv(trn_data);
      } else {
        if (trn_data.empty()) throw Error(ErrorCode::kInvalidConfig, "--data is required for a custom model");
        data = synth::read_dataset_csv(trn_data);
        tc.loss = learner::parse_loss(trn_loss);
        init.emplace(data.dim(), trn_width, data.num_classes, trn_init_seed);
      }
      auto [model, history] = learner::train(std::move(*init), data, tc);
      learner::save_checkpoint(out_file(g, trn_file), model);
      std::cout << "final loss " << history.epoch_loss.back() << ", train accuracy "
                << history.final_train_accuracy << "\n";
      return 0;
    }

    if (srv->parsed()) {
      auto model = std::make_shared<const learner::MlpClassifier>(learner::load_checkpoint(srv_model));
      blackbox::PredictServer server(model, srv_host, srv_port);
      g_server.store(&server);
      std::signal(SIGINT, handle_stop);
      std::signal(SIGTERM, handle_stop);
      if (!srv_port_file.empty()) metrics::write_text_file(srv_port_file, std::to_string(server.port()) + "\n");
      std::cout << "listening on " << server.endpoint().address() << std::endl;
      server.wait();
      g_server.store(nullptr);
      return 0;
    }

    if (ver->parsed()) {
      const auto config = load_benchmark_config(g);
      const auto world = bench::build_world(config, ver_replicate);
      const std::string defender = ver_defender.empty() ? config.resolved_defenders().front() : ver_defender;
      verifier::VerificationConfig vc = config.verification;
      if (!ver_variant.empty()) vc.variant = verifier::parse_variant(ver_variant);
      blackbox::HttpPredictionService service(blackbox::Endpoint::parse(ver_endpoint));
      const auto report = verifier::verify(world.generator(defender), service, vc, bench::shadow_seed(world, defender));
      metrics::write_text_file(out_file(g, "report.json"), verifier::report_to_json(report) + "\n");
      std::cout << verifier::to_string(report.verdict) << " G=" << report.grubbs.g << " G0=" << report.grubbs.g0
                << "\n";
      return 0;
    }

    if (bch->parsed()) {
      auto config = load_benchmark_config(g);
      if (bch_replicates) config.replicates = *bch_replicates;
      if (bch_transport) config.transport = *bch_transport == "served" ? bench::Transport::kServed
                                                                       : bench::Transport::kInProcess;
      const auto result = bench::run_benchmark(config);
      bench::write_outputs(result, g.out_dir);
      std::cout << metrics::summary_to_csv(result.summary);
      if (result.failed_cells > 0) {
        std::cerr << result.failed_cells << " failed cells\n";
        return static_cast<int>(std::min<std::size_t>(result.failed_cells, 255));
      }
      return 0;
    }

    if (rep->parsed()) {
      const auto cells = metrics::cells_from_csv(metrics::read_text_file(rep_cells));
      const std::string summary = metrics::summary_to_csv(metrics::summarize(cells));
      if (app.get_option("--out")->count() > 0) metrics::write_text_file(out_file(g, "summary.csv"), summary);
      std::cout << summary;
      std::size_t failed = 0;
      for (const auto& c : cells) failed += c.failed();
      return static_cast<int>(std::min<std::size_t>(failed, 255));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
