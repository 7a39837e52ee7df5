#include "dps/scenario.hpp"

#include <algorithm>
#include <map>

#include "dps/codec.hpp"
#include "dps/error.hpp"
#include "dps/pattern_store.hpp"
#include "dps/rng.hpp"

namespace dps {

std::string_view scenario_kind_name(ScenarioKind k) noexcept {
  switch (k) {
    case ScenarioKind::ideal: return "ideal";
    case ScenarioKind::in_distribution: return "in_distribution";
    case ScenarioKind::domain_shift: return "domain_shift";
    case ScenarioKind::ood: return "ood";
    case ScenarioKind::shortcut: return "shortcut";
    case ScenarioKind::label_noise: return "label_noise";
  }
  return "?";
}

ScenarioKind parse_scenario_kind(std::string_view name) {
  for (auto k : {ScenarioKind::ideal, ScenarioKind::in_distribution, ScenarioKind::domain_shift, ScenarioKind::ood,
                 ScenarioKind::shortcut, ScenarioKind::label_noise}) {
    if (scenario_kind_name(k) == name) return k;
  }
  throw Error(Errc::config, "unknown scenario name '" + std::string(name) + "'");
}

ModelConfig parse_model_config(const KeyValues& kv, const std::string& prefix) {
  ModelConfig m;
  m.conv_channels = kv.get_uint_list(prefix + "channels", m.conv_channels);
  m.epochs = kv.get_uint(prefix + "epochs", m.epochs);
  m.lr = kv.get_real(prefix + "lr", m.lr);
  m.batch_size = kv.get_uint(prefix + "batch_size", m.batch_size);
  m.momentum = kv.get_real(prefix + "momentum", m.momentum);
  if (m.epochs < 1 || m.batch_size < 1 || !(m.lr > 0.0) || !(m.momentum >= 0.0 && m.momentum < 1.0)) {
    throw Error(Errc::config, "model config needs epochs >= 1, batch_size >= 1, lr > 0, momentum in [0, 1)");
  }
  for (auto c : m.conv_channels) {
    if (c == 0) throw Error(Errc::config, "conv channel counts must be positive");
  }
  return m;
}

SyntheticDatasetConfig parse_dataset_config(const KeyValues& kv, const std::string& prefix,
                                            SyntheticDatasetConfig d) {
  if (auto k = kv.find(prefix + "kind")) d.kind = parse_dataset_kind(*k);
  if (d.kind == DatasetKind::colored_digits && !kv.contains(prefix + "channels")) d.channels = 3;
  d.num_classes = kv.get_uint(prefix + "num_classes", d.num_classes);
  d.samples_per_class = kv.get_uint(prefix + "samples_per_class", d.samples_per_class);
  d.image_size = kv.get_uint(prefix + "image_size", d.image_size);
  d.channels = kv.get_uint(prefix + "channels", d.channels);
  d.jitter = kv.get_real(prefix + "jitter", d.jitter);
  validate_config(d);
  return d;
}

void validate_spec(const ScenarioSpec& s) {
  if (s.severity && s.name != ScenarioKind::domain_shift) {
    throw Error(Errc::config, "severity is only valid for domain_shift");
  }
  if (s.noise_ratio && s.name != ScenarioKind::label_noise) {
    throw Error(Errc::config, "noise_ratio is only valid for label_noise");
  }
  if (s.correlation_strength && s.name != ScenarioKind::shortcut) {
    throw Error(Errc::config, "correlation_strength is only valid for shortcut");
  }
  if (s.corruption && s.name != ScenarioKind::domain_shift && s.name != ScenarioKind::label_noise) {
    throw Error(Errc::config, "corruption is only valid for domain_shift and label_noise");
  }
  if (s.severity && (*s.severity < 0 || *s.severity > 3)) throw Error(Errc::config, "severity must be 0..3");
  if (s.noise_ratio && !(*s.noise_ratio >= 0.0 && *s.noise_ratio <= 1.0)) {
    throw Error(Errc::config, "noise_ratio must lie in [0, 1]");
  }
  if (s.correlation_strength && !(*s.correlation_strength >= 0.0 && *s.correlation_strength <= 1.0)) {
    throw Error(Errc::config, "correlation_strength must lie in [0, 1]");
  }
  validate_config(s.dataset);
  if (s.name == ScenarioKind::shortcut && s.dataset.kind != DatasetKind::colored_digits) {
    throw Error(Errc::config, "shortcut needs dataset.kind = colored_digits");
  }
  if (s.name != ScenarioKind::shortcut && s.dataset.kind != DatasetKind::shapes) {
    throw Error(Errc::config, "this scenario needs dataset.kind = shapes");
  }
  if (s.test_samples_per_class < 1) throw Error(Errc::config, "test_samples_per_class must be >= 1");
  if (s.analysis.bins < 2) throw Error(Errc::config, "analysis.bins must be >= 2");
}

ScenarioSpec parse_scenario_spec(const KeyValues& kv, const std::filesystem::path& base_dir) {
  ScenarioSpec s;
  s.name = parse_scenario_kind(kv.get_string("name"));
  s.seed = kv.get_uint("seed", 0);
  if (kv.contains("severity")) s.severity = static_cast<int>(kv.get_uint("severity"));
  if (auto c = kv.find("corruption")) s.corruption = parse_corruption(*c);
  if (kv.contains("noise_ratio")) s.noise_ratio = kv.get_real("noise_ratio");
  if (kv.contains("correlation_strength")) s.correlation_strength = kv.get_real("correlation_strength");

  SyntheticDatasetConfig dataset;
  if (s.name == ScenarioKind::shortcut) {
    dataset.kind = DatasetKind::colored_digits;
    dataset.channels = 3;
  }
  if (auto path = kv.find("dataset_config")) {
    const auto file = load_key_values(base_dir / *path);
    dataset = parse_dataset_config(file, "", dataset);
    if (auto extra = file.unused_keys(); !extra.empty()) {
      throw Error(Errc::config, "unknown key '" + extra.front() + "' in dataset config");
    }
  }
  s.dataset = parse_dataset_config(kv, "dataset.", dataset);
  s.test_samples_per_class = kv.get_uint("dataset.test_samples_per_class", s.test_samples_per_class);

  KeyValues model_kv;
  if (auto path = kv.find("model_config")) model_kv = load_key_values(base_dir / *path);
  for (const auto& [k, v] : kv.entries()) {
    if (k.rfind("model.", 0) == 0 || k.rfind("train.", 0) == 0) model_kv.set(k.substr(6), *kv.find(k));
  }
  s.model = parse_model_config(model_kv);
  if (auto extra = model_kv.unused_keys(); !extra.empty()) {
    throw Error(Errc::config, "unknown model/train key '" + extra.front() + "'");
  }

  s.analysis.bins = kv.get_uint("analysis.bins", s.analysis.bins);
  s.analysis.min_class_size = kv.get_uint("analysis.min_class_size", s.analysis.min_class_size);
  const auto reference = kv.get_string("analysis.reference", "all");
  if (reference != "all" && reference != "correct_only") {
    throw Error(Errc::config, "analysis.reference must be 'all' or 'correct_only'");
  }
  s.analysis.correct_only_reference = reference == "correct_only";
  if (auto ckpt = kv.find("checkpoint")) s.checkpoint = base_dir / *ckpt;

  if (auto extra = kv.unused_keys(); !extra.empty()) {
    throw Error(Errc::config, "unknown key '" + extra.front() + "' in scenario spec");
  }
  validate_spec(s);
  return s;
}

ScenarioSpec load_scenario_spec(const std::filesystem::path& path) {
  return parse_scenario_spec(load_key_values(path), path.parent_path());
}

ScenarioSeeds ScenarioSeeds::from(std::uint64_t seed) {
  return {Rng::mix(seed, 1), Rng::mix(seed, 2), Rng::mix(seed, 3),
          Rng::mix(seed, 4), Rng::mix(seed, 5), Rng::mix(seed, 6)};
}

Experiment train_experiment(const ModelConfig& config, Batch train, std::size_t num_classes, std::uint64_t init_seed,
                            std::uint64_t shuffle_seed) {
  const MapShape input = train.sample_shape();
  ModelCheckpoint model = make_model(input, standard_cnn_layers(config.conv_channels, num_classes), init_seed);
  TrainOptions opts;
  opts.epochs = config.epochs;
  opts.lr = config.lr;
  opts.batch_size = config.batch_size;
  opts.momentum = config.momentum;
  opts.seed = shuffle_seed;
  auto trained = dps::train(std::move(model), train, opts);
  Experiment e;
  e.model = std::move(trained.model);
  e.epoch_loss = std::move(trained.epoch_loss);
  e.train_patterns = extract_patterns(e.model, train);
  e.train = std::move(train);
  return e;
}

Experiment load_experiment(ModelCheckpoint model, Batch train) {
  validate_model(model);
  if (train.sample_shape() != model.input) {
    throw Error(Errc::compatibility, "checkpoint input shape does not match the scenario data");
  }
  Experiment e;
  e.model = std::move(model);
  e.train_patterns = extract_patterns(e.model, train);
  e.train = std::move(train);
  return e;
}

SplitOutcome evaluate_split(const Experiment& exp, std::string name, const Batch& test,
                            const AnalysisOptions& options) {
  SplitOutcome out;
  out.name = std::move(name);
  out.patterns = extract_patterns(exp.model, test);
  out.report = analyze(exp.train_patterns, out.patterns, options);
  out.report.metadata["split"] = out.name;
  return out;
}

Batch severity_probe(const Batch& test, Corruption kind, std::uint64_t seed) {
  std::vector<Batch> parts{test};
  for (int sev = 1; sev <= 3; ++sev) parts.push_back(corrupt(test, kind, sev, Rng::mix(seed, static_cast<std::uint64_t>(sev))));
  return concat(parts);
}

StructuralStats activation_structure(const ModelCheckpoint& model, const Batch& batch) {
  std::map<std::uint32_t, std::vector<std::vector<double>>> by_class;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto a = activation_baseline(model, batch.sample(i), static_cast<std::uint32_t>(i));
    double norm = 0.0;
    for (double v : a.vector) norm += v * v;
    if (norm > kZeroNormEpsilon * kZeroNormEpsilon) by_class[batch.labels[i]].push_back(std::move(a.vector));
  }
  return structural_stats(by_class);
}

namespace {

std::vector<double> dataset_column(const std::vector<SplitOutcome>& splits, bool dps) {
  std::vector<double> v;
  for (const auto& s : splits) v.push_back(dps ? s.report.dps_dataset : s.report.gen_gap_dataset);
  return v;
}

SyntheticDatasetConfig with_samples(SyntheticDatasetConfig c, std::size_t per_class) {
  c.samples_per_class = per_class;
  return c;
}

}  // namespace

ScenarioResult run_scenario(const ScenarioSpec& spec) {
  validate_spec(spec);
  const auto seeds = ScenarioSeeds::from(spec.seed);
  const std::size_t classes = spec.dataset.num_classes;
  SyntheticDatasetConfig train_cfg = spec.dataset;
  SyntheticDatasetConfig test_cfg = with_samples(spec.dataset, spec.test_samples_per_class);
  if (spec.name == ScenarioKind::in_distribution) {
    // Harder generator: fewer training samples and stronger jitter on both splits.
    train_cfg.samples_per_class = std::max<std::size_t>(4, train_cfg.samples_per_class / 3);
    train_cfg.jitter *= 1.8;
    test_cfg.jitter *= 1.8;
  }
  const double train_corr = spec.correlation_strength.value_or(0.95);
  Batch train = generate_dataset(train_cfg, seeds.train_data, train_corr);
  Batch clean_train = train;
  std::size_t flipped = 0;
  if (spec.name == ScenarioKind::label_noise) {
    auto noisy = inject_label_noise(train, spec.noise_ratio.value_or(0.2), classes, seeds.label_noise);
    flipped = static_cast<std::size_t>(std::count(noisy.flipped.begin(), noisy.flipped.end(), true));
    train = std::move(noisy.batch);
  }

  ScenarioResult result;
  result.spec = spec;
  if (spec.checkpoint) {
    result.experiment = load_experiment(load_checkpoint(*spec.checkpoint), std::move(train));
    if (result.experiment.model.num_classes() != classes) {
      throw Error(Errc::compatibility, "checkpoint class count does not match the scenario dataset");
    }
  } else {
    result.experiment = train_experiment(spec.model, std::move(train), classes, seeds.init, seeds.shuffle);
  }
  const Experiment& exp = result.experiment;
  const AnalysisOptions& opts = spec.analysis;

  switch (spec.name) {
    case ScenarioKind::ideal:
    case ScenarioKind::in_distribution: {
      result.splits.push_back(evaluate_split(exp, "test", generate_dataset(test_cfg, seeds.test_data), opts));
      break;
    }
    case ScenarioKind::domain_shift: {
      const Corruption kind = spec.corruption.value_or(Corruption::blur);
      const int requested = spec.severity.value_or(3);
      const Batch clean = generate_dataset(test_cfg, seeds.test_data);
      std::vector<SplitOutcome> sweep;
      for (int sev = 0; sev <= 3; ++sev) {
        const Batch test = sev == 0 ? clean : corrupt(clean, kind, sev, Rng::mix(seeds.corruption, static_cast<std::uint64_t>(sev)));
        sweep.push_back(evaluate_split(exp, "severity_" + std::to_string(sev), test, opts));
      }
      result.dataset_fit = try_fit(dataset_column(sweep, true), dataset_column(sweep, false));
      std::rotate(sweep.begin(), sweep.begin() + requested, sweep.begin() + requested + 1);
      result.splits = std::move(sweep);
      result.details["corruption"] = corruption_name(kind);
      result.details["severity"] = requested;
      break;
    }
    case ScenarioKind::ood: {
      SyntheticDatasetConfig variant = test_cfg;
      variant.kind = DatasetKind::shapes_variant;
      result.splits.push_back(evaluate_split(exp, "ood", gen_shapes_variant(variant, seeds.test_data), opts));
      result.splits.push_back(evaluate_split(exp, "in_distribution", generate_dataset(test_cfg, seeds.test_data), opts));
      break;
    }
    case ScenarioKind::shortcut: {
      result.splits.push_back(
          evaluate_split(exp, "decorrelated", gen_colored_digits(test_cfg, 0.0, seeds.test_data), opts));
      result.splits.push_back(
          evaluate_split(exp, "correlated", gen_colored_digits(test_cfg, train_corr, seeds.test_data), opts));
      const double dec = result.splits[0].report.dps_dataset, cor = result.splits[1].report.dps_dataset;
      result.details["train_correlation_strength"] = train_corr;
      result.details["decorrelated_mean_dps"] = dec;
      result.details["correlated_mean_dps"] = cor;
      result.details["dps_ratio"] = cor > 0.0 ? nlohmann::json(dec / cor) : nlohmann::json(nullptr);
      result.details["decorrelated_mode_count"] = result.splits[0].report.spectrum.mode_count;
      break;
    }
    case ScenarioKind::label_noise: {
      const Corruption kind = spec.corruption.value_or(Corruption::blur);
      const Batch probe = severity_probe(generate_dataset(test_cfg, seeds.test_data), kind, seeds.corruption);
      result.splits.push_back(evaluate_split(exp, "probe", probe, opts));
      // Same seeds, clean labels: the reference correlation the noisy run is compared against.
      const Experiment clean = spec.checkpoint ? load_experiment(exp.model, clean_train)
                                               : train_experiment(spec.model, clean_train, classes, seeds.init, seeds.shuffle);
      const SplitOutcome clean_probe = evaluate_split(clean, "probe_clean_labels", probe, opts);
      auto r_of = [](const OptionalFit& f) { return f.fit ? nlohmann::json(f.fit->pearson_r) : nlohmann::json(nullptr); };
      result.details["noise_ratio"] = spec.noise_ratio.value_or(0.2);
      result.details["flipped_labels"] = flipped;
      result.details["probe_corruption"] = corruption_name(kind);
      result.details["sample_r_noisy"] = r_of(result.splits[0].report.sample_fit);
      result.details["sample_r_clean"] = r_of(clean_probe.report.sample_fit);
      result.details["class_r_noisy"] = r_of(result.splits[0].report.class_fit);
      result.details["class_r_clean"] = r_of(clean_probe.report.class_fit);
      break;
    }
  }

  result.decision_structure = structural_stats(exp.train_patterns);
  result.activation_structure = activation_structure(exp.model, exp.train);
  if (!result.dataset_fit.fit && result.dataset_fit.note.empty()) {
    result.dataset_fit.note = "dataset-level fit needs at least three test splits";
  }
  return result;
}

nlohmann::json scenario_report_json(const ScenarioResult& r) {
  nlohmann::json j;
  j["format"] = "dps-scenario-report";
  j["version"] = 1;
  j["scenario"] = scenario_kind_name(r.spec.name);
  j["seed"] = r.spec.seed;
  j["target_layer"] = r.experiment.model.target_layer_index;
  j["feature_layer"] = feature_layer_index(r.experiment.model);
  j["channels"] = feature_shape(r.experiment.model).channels;
  j["train"] = {{"samples", r.experiment.train.size()},
                {"epoch_loss", r.experiment.epoch_loss},
                {"accuracy", r.splits.front().report.train_accuracy}};
  j["structure"] = {{"decision_patterns", to_json(r.decision_structure)},
                    {"activation_baseline", to_json(r.activation_structure)},
                    {"margin_advantage", r.decision_structure.margin() - r.activation_structure.margin()}};
  j["primary_split"] = r.splits.front().name;
  nlohmann::json splits = nlohmann::json::object();
  for (std::size_t i = 0; i < r.splits.size(); ++i) {
    const auto& s = r.splits[i];
    auto sj = to_json(s.report);
    sj["records"]["table"] = (i == 0 ? std::string() : s.name + ".") + "samples.csv";
    splits[s.name] = std::move(sj);
  }
  j["splits"] = splits;
  j["fits"] = {{"dataset", to_json(r.dataset_fit)}};
  j["details"] = r.details.is_null() ? nlohmann::json::object() : r.details;
  return j;
}

void write_scenario_outputs(const ScenarioResult& r, const std::filesystem::path& dir, RunManifest manifest) {
  std::filesystem::create_directories(dir);
  auto emit = [&](const std::string& name, const std::string& bytes) {
    write_file(dir / name, bytes);
    manifest.outputs[name] = sha256_hex(bytes);
  };
  const std::string ckpt = encode_checkpoint(r.experiment.model);
  emit("checkpoint.dpsm", ckpt);
  const std::string ckpt_hash = sha256_hex(ckpt);
  const std::uint32_t k = static_cast<std::uint32_t>(feature_shape(r.experiment.model).channels);

  auto emit_store = [&](const std::string& file, const std::string& split, const std::vector<DecisionPattern>& pats) {
    emit(file, encode_pattern_store({k, pats}));
    StoreSidecar meta;
    meta.checkpoint_hash = ckpt_hash;
    meta.target_layer = r.experiment.model.target_layer_index;
    meta.split = split;
    meta.config["class_used"] = "true_label";
    meta.config["scenario"] = std::string(scenario_kind_name(r.spec.name));
    emit(file + ".meta", encode_sidecar(meta));
  };
  emit_store("train_patterns.dps1", "train", r.experiment.train_patterns);

  std::vector<DatasetRow> rows;
  for (std::size_t i = 0; i < r.splits.size(); ++i) {
    const auto& s = r.splits[i];
    const std::string prefix = i == 0 ? "" : s.name + ".";
    emit_store(i == 0 ? "test_patterns.dps1" : s.name + "_patterns.dps1", s.name, s.patterns);
    emit(prefix + "samples.csv", samples_csv(s.report.records));
    emit(prefix + "classes.csv", classes_csv(s.report.classes));
    emit(prefix + "histogram.csv", histogram_csv(s.report.spectrum));
    emit(prefix + "taylor.csv", taylor_csv(s.report.taylor));
    rows.push_back(dataset_row(s.name, s.report));
  }
  emit("datasets.csv", datasets_csv(rows));
  emit("report.json", scenario_report_json(r).dump(2) + "\n");
  manifest.seeds["scenario"] = r.spec.seed;
  manifest.seeds["model_init"] = r.experiment.model.rng_seed;
  if (manifest.finished.empty()) manifest.finished = utc_timestamp();
  write_manifest(manifest, dir / "manifest.json");
}

}  // namespace dps
