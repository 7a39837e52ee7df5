#include "commands.hpp"

#include <algorithm>
#include <numeric>

#include <CLI11.hpp>

#include "dps/analysis.hpp"
#include "dps/codec.hpp"
#include "dps/config.hpp"
#include "dps/datasets.hpp"
#include "dps/error.hpp"
#include "dps/manifest.hpp"
#include "dps/pattern_store.hpp"
#include "dps/rng.hpp"
#include "dps/scenario.hpp"

namespace dps::cli {
namespace {

void reject_unused(const KeyValues& kv, const std::string& what) {
  if (auto extra = kv.unused_keys(); !extra.empty()) {
    throw Error(Errc::config, "unknown key '" + extra.front() + "' in " + what);
  }
}

RunManifest start_manifest(const std::string& command_line) {
  RunManifest m;
  m.command_line = command_line;
  m.started = utc_timestamp();
  return m;
}

void finish_manifest(RunManifest m, const std::filesystem::path& path) {
  m.finished = utc_timestamp();
  write_manifest(m, path);
}

std::string join(const std::vector<std::string>& args) {
  std::string s = "dps";
  for (const auto& a : args) s += ' ' + a;
  return s;
}

}  // namespace

std::filesystem::path manifest_path_for(const std::filesystem::path& output) {
  auto p = output;
  p += ".manifest.json";
  return p;
}

void cmd_gen_data(const GenDataArgs& a, const std::string& command_line, std::ostream& out) {
  auto m = start_manifest(command_line);
  m.add_input("config", a.config);
  const KeyValues kv = load_key_values(a.config);
  const SyntheticDatasetConfig cfg = parse_dataset_config(kv);
  const double correlation = kv.get_real("correlation_strength", 1.0);
  if (kv.contains("correlation_strength") && cfg.kind != DatasetKind::colored_digits) {
    throw Error(Errc::config, "correlation_strength applies to colored_digits only");
  }
  std::optional<Corruption> corruption;
  if (auto c = kv.find("corruption")) corruption = parse_corruption(*c);
  const auto severity = kv.get_uint("severity", 0);
  if (corruption.has_value() != kv.contains("severity")) {
    throw Error(Errc::config, "corruption and severity must be given together");
  }
  reject_unused(kv, "dataset config");

  Batch batch = generate_dataset(cfg, a.seed, correlation);
  if (corruption) batch = corrupt(batch, *corruption, static_cast<int>(severity), Rng::mix(a.seed, 5));

  const std::string bytes = encode_dataset(batch);
  write_file(a.out, bytes);
  m.seeds["data"] = a.seed;
  m.outputs[a.out.filename().string()] = sha256_hex(bytes);
  finish_manifest(m, manifest_path_for(a.out));
  const auto s = batch.sample_shape();
  out << "wrote " << batch.size() << " samples (" << s.channels << "x" << s.height << "x" << s.width << ") to "
      << a.out.string() << "\n";
}

void cmd_train(const TrainArgs& a, const std::string& command_line, std::ostream& out) {
  auto m = start_manifest(command_line);
  m.add_input("data", a.data);
  m.add_input("model_config", a.model_config);
  const Batch data = load_dataset(a.data);
  const KeyValues kv = load_key_values(a.model_config);
  const ModelConfig mc = parse_model_config(kv);
  const std::size_t max_label = *std::max_element(data.labels.begin(), data.labels.end());
  const std::size_t classes = kv.get_uint("num_classes", max_label + 1);
  reject_unused(kv, "model config");
  if (classes <= max_label) throw Error(Errc::compatibility, "dataset labels exceed num_classes");

  const auto seeds = ScenarioSeeds::from(a.seed);
  ModelCheckpoint model = make_model(data.sample_shape(), standard_cnn_layers(mc.conv_channels, classes), seeds.init);
  TrainOptions opts;
  opts.epochs = mc.epochs;
  opts.lr = mc.lr;
  opts.batch_size = mc.batch_size;
  opts.momentum = mc.momentum;
  opts.seed = seeds.shuffle;
  const TrainResult result = train(std::move(model), data, opts);

  const std::string bytes = encode_checkpoint(result.model);
  write_file(a.out, bytes);
  m.seeds["train"] = a.seed;
  m.seeds["init"] = seeds.init;
  m.seeds["shuffle"] = seeds.shuffle;
  m.outputs[a.out.filename().string()] = sha256_hex(bytes);
  finish_manifest(m, manifest_path_for(a.out));

  const auto losses = loss_per_sample(result.model, data);
  const double mean_loss = std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
  out << "epochs=" << mc.epochs << " final_epoch_loss=" << format_double(result.epoch_loss.back())
      << " train_loss=" << format_double(mean_loss) << " train_accuracy=" << format_double(accuracy(result.model, data))
      << "\n";
}

void cmd_extract(const ExtractArgs& a, const std::string& command_line, std::ostream& out) {
  if (a.split.empty()) throw Error(Errc::config, "split name must not be empty");
  auto m = start_manifest(command_line);
  m.add_input("checkpoint", a.checkpoint);
  m.add_input("data", a.data);
  const std::string ckpt_bytes = read_file(a.checkpoint);
  const ModelCheckpoint model = decode_checkpoint(ckpt_bytes);
  const Batch data = load_dataset(a.data);
  if (data.sample_shape() != model.input) {
    throw Error(Errc::compatibility, "dataset sample shape " + shape_string(data.sample_shape().dims()) +
                                         " does not match checkpoint input " + shape_string(model.input.dims()));
  }
  const std::size_t max_label = *std::max_element(data.labels.begin(), data.labels.end());
  if (max_label >= model.num_classes()) {
    throw Error(Errc::compatibility, "dataset has label " + std::to_string(max_label) + " but the checkpoint has " +
                                         std::to_string(model.num_classes()) + " classes");
  }

  PatternStore store;
  store.channels = static_cast<std::uint32_t>(feature_shape(model).channels);
  store.patterns = extract_patterns(model, data);
  const auto degenerate = std::count_if(store.patterns.begin(), store.patterns.end(),
                                        [](const DecisionPattern& p) { return p.degenerate(); });

  StoreSidecar meta;
  meta.checkpoint_hash = sha256_hex(ckpt_bytes);
  meta.target_layer = model.target_layer_index;
  meta.split = a.split;
  meta.config["class_used"] = "true_label";
  meta.config["feature_layer"] = std::to_string(feature_layer_index(model));
  meta.config["dataset_hash"] = m.input_hashes["data"];

  const std::string bytes = encode_pattern_store(store);
  const std::string meta_bytes = encode_sidecar(meta);
  write_file(a.out, bytes);
  write_file(sidecar_path(a.out), meta_bytes);
  m.seeds["extract"] = a.seed;
  m.outputs[a.out.filename().string()] = sha256_hex(bytes);
  m.outputs[sidecar_path(a.out).filename().string()] = sha256_hex(meta_bytes);
  finish_manifest(m, manifest_path_for(a.out));
  out << "records=" << store.patterns.size() << " channels=" << store.channels << " degenerate=" << degenerate
      << "\n";
}

void cmd_analyze(const AnalyzeArgs& a, const std::string& command_line, std::ostream& out) {
  auto m = start_manifest(command_line);
  m.add_input("train", a.train);
  m.add_input("test", a.test);
  const PatternStore train = load_pattern_store(a.train);
  const PatternStore test = load_pattern_store(a.test);
  if (train.channels != test.channels) {
    throw Error(Errc::compatibility, "train store has K=" + std::to_string(train.channels) + " but test store has K=" +
                                         std::to_string(test.channels));
  }
  const auto train_meta = sidecar_path(a.train);
  const auto test_meta = sidecar_path(a.test);
  if (std::filesystem::exists(train_meta) && std::filesystem::exists(test_meta)) {
    const auto tm = decode_sidecar(read_file(train_meta));
    const auto sm = decode_sidecar(read_file(test_meta));
    if (tm.checkpoint_hash != sm.checkpoint_hash) {
      throw Error(Errc::compatibility, "train and test stores were extracted from different checkpoints");
    }
  }
  if (a.reference != "all" && a.reference != "correct_only") {
    throw Error(Errc::config, "--reference must be 'all' or 'correct_only'");
  }
  AnalysisOptions opts;
  opts.bins = a.bins;
  opts.min_class_size = a.min_class_size;
  opts.correct_only_reference = a.reference == "correct_only";
  const DpsReport report = analyze(train.patterns, test.patterns, opts);

  write_report_files(report, a.out);
  for (const char* name : {"report.json", "samples.csv", "classes.csv", "datasets.csv", "histogram.csv", "taylor.csv"}) {
    m.outputs[name] = sha256_file(a.out / name);
  }
  m.seeds["analyze"] = a.seed;
  finish_manifest(m, a.out / "manifest.json");
  out << "test_records=" << report.records.size() << " dps_dataset=" << format_double(report.dps_dataset)
      << " gen_gap_dataset=" << format_double(report.gen_gap_dataset);
  if (report.sample_fit.fit) out << " sample_r=" << format_double(report.sample_fit.fit->pearson_r);
  out << "\n";
}

void cmd_scenario(const ScenarioArgs& a, const std::string& command_line, std::ostream& out) {
  auto m = start_manifest(command_line);
  m.add_input("spec", a.spec);
  KeyValues kv = load_key_values(a.spec);
  for (const auto& o : a.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw Error(Errc::config, "override '" + o + "' is not key=value");
    kv.set(o.substr(0, eq), o.substr(eq + 1));
  }
  if (a.has_seed) kv.set("seed", std::to_string(a.seed));
  const auto base = a.spec.parent_path();
  for (const char* key : {"dataset_config", "model_config", "checkpoint"}) {
    if (auto p = kv.find(key)) m.add_input(key, base / *p);
  }
  const ScenarioSpec spec = parse_scenario_spec(kv, base);
  const ScenarioResult result = run_scenario(spec);
  write_scenario_outputs(result, a.out, std::move(m));
  const auto& primary = result.splits.front().report;
  out << "scenario=" << scenario_kind_name(spec.name) << " split=" << result.splits.front().name
      << " dps_dataset=" << format_double(primary.dps_dataset)
      << " median_dps=" << format_double(primary.spectrum.summary.median)
      << " test_accuracy=" << format_double(primary.test_accuracy) << "\n";
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Decision pattern shift diagnostics", "dps"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic dataset file");
  gen_cmd->add_option("--config", gen.config, "Dataset config (key = value)")->required()->check(CLI::ExistingFile);
  gen_cmd->add_option("--out", gen.out, "Output dataset file")->required();
  gen_cmd->add_option("--seed", gen.seed, "Generator seed");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model on a dataset file");
  train_cmd->add_option("--data", tr.data, "Dataset file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--model-config", tr.model_config, "Model config (key = value)")
      ->required()
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--out", tr.out, "Output checkpoint")->required();
  train_cmd->add_option("--seed", tr.seed, "Initialization and shuffle seed");

  ExtractArgs ex;
  auto* extract_cmd = app.add_subcommand("extract", "Extract decision patterns into a pattern store");
  extract_cmd->add_option("--checkpoint", ex.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  extract_cmd->add_option("--data", ex.data, "Dataset file")->required()->check(CLI::ExistingFile);
  extract_cmd->add_option("--split", ex.split, "Split name recorded in the sidecar")->capture_default_str();
  extract_cmd->add_option("--out", ex.out, "Output pattern store")->required();
  extract_cmd->add_option("--seed", ex.seed, "Recorded in the manifest; extraction is deterministic");

  AnalyzeArgs an;
  auto* analyze_cmd = app.add_subcommand("analyze", "Compute the DPS report from train and test stores");
  analyze_cmd->add_option("--train", an.train, "Training pattern store")->required()->check(CLI::ExistingFile);
  analyze_cmd->add_option("--test", an.test, "Test pattern store")->required()->check(CLI::ExistingFile);
  analyze_cmd->add_option("--out", an.out, "Output directory")->required();
  analyze_cmd->add_option("--bins", an.bins, "Spectrum histogram bins")->capture_default_str();
  analyze_cmd->add_option("--min-class-size", an.min_class_size, "Minimum test records for the class-level fit")
      ->capture_default_str();
  analyze_cmd->add_option("--reference", an.reference, "Reference members: all | correct_only")->capture_default_str();
  analyze_cmd->add_option("--seed", an.seed, "Recorded in the manifest; analysis is deterministic");

  ScenarioArgs sc;
  auto* scenario_cmd = app.add_subcommand("scenario", "Run a full scenario from a spec file");
  scenario_cmd->add_option("--spec", sc.spec, "Scenario spec (key = value)")->required()->check(CLI::ExistingFile);
  scenario_cmd->add_option("--out", sc.out, "Run directory")->required();
  scenario_cmd->add_option("--set", sc.overrides, "Override a spec key, key=value (repeatable)");
  auto* seed_opt = scenario_cmd->add_option("--seed", sc.seed, "Override the spec seed");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  sc.has_seed = seed_opt->count() > 0;

  const std::string line = join(args);
  try {
    if (*gen_cmd) cmd_gen_data(gen, line, out);
    if (*train_cmd) cmd_train(tr, line, out);
    if (*extract_cmd) cmd_extract(ex, line, out);
    if (*analyze_cmd) cmd_analyze(an, line, out);
    if (*scenario_cmd) cmd_scenario(sc, line, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: io: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace dps::cli
