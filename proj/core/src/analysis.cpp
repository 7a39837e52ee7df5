#include "dps/analysis.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

#include "dps/codec.hpp"
#include "dps/error.hpp"

namespace dps {

StructuralStats structural_stats(const std::map<std::uint32_t, std::vector<std::vector<double>>>& by_class) {
  if (by_class.size() < 2) throw Error(Errc::insufficient_classes, "structural stats need two classes");
  StructuralStats s;
  std::vector<ClassReference> refs;
  for (const auto& [c, vectors] : by_class) {
    s.classes.push_back(c);
    s.intra.push_back(intra_class_consistency(vectors));
    ClassReference r;
    r.class_index = c;
    r.mean_pattern = mean_of_normalized(vectors);
    r.sample_count = vectors.size();
    refs.push_back(std::move(r));
  }
  for (auto c : s.classes) s.inter.push_back(inter_class_confusability(refs, c));
  s.min_intra = *std::min_element(s.intra.begin(), s.intra.end());
  s.max_inter = std::max_element(s.inter.begin(), s.inter.end(), [](const auto& a, const auto& b) {
                  return a.value < b.value;
                })->value;
  return s;
}

StructuralStats structural_stats(std::span<const DecisionPattern> patterns) {
  std::vector<const DecisionPattern*> sorted;
  for (const auto& p : patterns) {
    if (!p.degenerate()) sorted.push_back(&p);
  }
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto* a, const auto* b) { return a->sample_id < b->sample_id; });
  std::map<std::uint32_t, std::vector<std::vector<double>>> by_class;
  for (const auto* p : sorted) by_class[p->true_class].push_back(p->pattern);
  return structural_stats(by_class);
}

OptionalFit try_fit(std::span<const double> xs, std::span<const double> ys) {
  OptionalFit out;
  try {
    out.fit = pearson_fit(xs, ys);
  } catch (const Error& e) {
    if (e.code() != Errc::insufficient_samples && e.code() != Errc::degenerate_fit) throw;
    out.note = e.what();
  }
  return out;
}

DpsReport analyze(std::span<const DecisionPattern> train, std::span<const DecisionPattern> test,
                  const AnalysisOptions& options) {
  if (train.empty()) throw Error(Errc::empty_input, "training pattern set is empty");
  if (test.empty()) throw Error(Errc::empty_input, "test pattern set is empty");
  if (options.bins < 2) throw Error(Errc::config, "bins must be >= 2");
  const std::size_t k = train.front().pattern.size();
  for (const auto& p : train) {
    if (p.pattern.size() != k) throw Error(Errc::compatibility, "training patterns disagree on K");
  }
  for (const auto& p : test) {
    if (p.pattern.size() != k) throw Error(Errc::compatibility, "train and test patterns disagree on K");
  }

  DpsReport rep;
  rep.channels = k;
  rep.metadata["reference"] = options.correct_only_reference ? "correct_only" : "all_training_samples";
  rep.metadata["reference_normalization"] = "mean of l2-normalized patterns, not re-normalized";
  rep.metadata["taylor_context"] = "softmax at class-mean g_c with class-mean non-target log-partition";
  rep.metadata["gen_gap"] = "per-sample cross-entropy minus class mean training cross-entropy";

  std::set<std::uint32_t> train_classes;
  for (const auto& p : train) {
    train_classes.insert(p.true_class);
    if (p.degenerate()) ++rep.exclusions.train_degenerate;
  }

  std::map<std::uint32_t, ClassReference> refs;
  std::map<std::uint32_t, double> train_loss;
  std::map<std::uint32_t, std::pair<std::size_t, std::size_t>> train_hits;  // (correct, total)
  for (auto c : train_classes) {
    ReferenceOptions ro;
    ro.correct_only = options.correct_only_reference;
    try {
      refs.emplace(c, class_reference(train, c, ro, Split::train));
    } catch (const Error& e) {
      if (e.code() != Errc::empty_class) throw;
    }
    std::vector<const DecisionPattern*> members;
    for (const auto& p : train) {
      if (p.true_class == c) members.push_back(&p);
    }
    std::stable_sort(members.begin(), members.end(),
                     [](const auto* a, const auto* b) { return a->sample_id < b->sample_id; });
    double s = 0.0;
    std::size_t hit = 0;
    for (const auto* p : members) {
      s += p->loss;
      if (p->predicted_class == p->true_class) ++hit;
    }
    train_loss[c] = s / static_cast<double>(members.size());
    train_hits[c] = {hit, members.size()};
  }
  for (const auto& [c, r] : refs) rep.references.push_back(r);

  std::size_t train_correct = 0;
  for (const auto& [c, h] : train_hits) train_correct += h.first;
  rep.train_accuracy = static_cast<double>(train_correct) / static_cast<double>(train.size());

  std::size_t test_correct = 0;
  for (const auto& p : test) {
    const bool correct = p.predicted_class == p.true_class;
    if (correct) ++test_correct;
    if (p.degenerate()) {
      ++rep.exclusions.test_degenerate;
      continue;
    }
    auto it = refs.find(p.class_used);
    if (it == refs.end()) {
      ++rep.exclusions.test_without_reference;
      continue;
    }
    DpsRecord r;
    r.sample_id = p.sample_id;
    r.class_index = p.class_used;
    r.dps = dps_sample(p, it->second);
    r.loss = p.loss;
    r.gen_gap = gen_gap_sample(p.loss, train_loss.at(p.class_used));
    r.correct = correct;
    double dev = 0.0;
    for (std::size_t i = 0; i < k; ++i) dev += p.normalized[i] - it->second.mean_pattern[i];
    r.pattern_deviation = dev;
    rep.records.push_back(r);
  }
  rep.test_accuracy = static_cast<double>(test_correct) / static_cast<double>(test.size());
  if (rep.records.empty()) throw Error(Errc::empty_input, "no scorable test samples");
  std::sort(rep.records.begin(), rep.records.end(), [](const DpsRecord& a, const DpsRecord& b) {
    return a.sample_id != b.sample_id ? a.sample_id < b.sample_id : a.class_index < b.class_index;
  });

  rep.dps_dataset = dps_dataset(rep.records);
  double gap_sum = 0.0;
  for (const auto& r : rep.records) gap_sum += r.gen_gap;
  rep.gen_gap_dataset = gap_sum / static_cast<double>(rep.records.size());

  std::map<std::uint32_t, std::vector<const DpsRecord*>> by_class;
  for (const auto& r : rep.records) by_class[r.class_index].push_back(&r);
  std::vector<double> class_dps, class_gap;
  for (auto c : train_classes) {
    ClassSummary cs;
    cs.class_index = c;
    cs.train_count = train_hits[c].second;
    cs.train_mean_loss = train_loss[c];
    cs.train_accuracy = static_cast<double>(train_hits[c].first) / static_cast<double>(train_hits[c].second);
    auto it = by_class.find(c);
    if (it != by_class.end()) {
      const auto& members = it->second;
      cs.test_count = members.size();
      double loss = 0.0, gap = 0.0;
      std::size_t hit = 0;
      for (const auto* r : members) {
        loss += r->loss;
        gap += r->gen_gap;
        if (r->correct) ++hit;
      }
      const double n = static_cast<double>(members.size());
      cs.test_mean_loss = loss / n;
      cs.gen_gap = gap / n;
      cs.test_accuracy = static_cast<double>(hit) / n;
      cs.dps = dps_class(rep.records, c);
      if (cs.test_count >= options.min_class_size) {
        class_dps.push_back(cs.dps);
        class_gap.push_back(cs.gen_gap);
      } else {
        ++rep.exclusions.classes_below_min_size;
      }
    }
    rep.classes.push_back(cs);
  }

  std::vector<double> xs, ys;
  for (const auto& r : rep.records) {
    xs.push_back(r.dps);
    ys.push_back(r.gen_gap);
  }
  rep.sample_fit = try_fit(xs, ys);
  rep.class_fit = try_fit(class_dps, class_gap);

  if (refs.size() >= 2) {
    try {
      rep.structure = structural_stats(train);
    } catch (const Error& e) {
      if (e.code() != Errc::insufficient_samples && e.code() != Errc::insufficient_classes) throw;
    }
  }
  for (auto c : train_classes) rep.taylor.push_back(taylor_diagnostic(train, test, c));
  rep.spectrum = spectrum_histogram(rep.records, options.bins);
  return rep;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

nlohmann::json to_json(const FitResult& f) {
  return {{"pearson_r", f.pearson_r}, {"slope", f.slope}, {"intercept", f.intercept}, {"n", f.n},
          {"p_value_note", f.p_value_note}};
}

nlohmann::json to_json(const OptionalFit& f) {
  if (f.fit) return to_json(*f.fit);
  return {{"fit", nullptr}, {"note", f.note}};
}

nlohmann::json to_json(const StructuralStats& s) {
  nlohmann::json per = nlohmann::json::array();
  for (std::size_t i = 0; i < s.classes.size(); ++i) {
    per.push_back({{"class", s.classes[i]}, {"intra", s.intra[i]}, {"inter", s.inter[i].value},
                   {"nearest_class", s.inter[i].nearest_class}});
  }
  return {{"per_class", per}, {"min_intra", s.min_intra}, {"max_inter", s.max_inter}, {"margin", s.margin()}};
}

nlohmann::json to_json(const SpectrumHistogram& h) {
  return {{"bin_edges", h.bin_edges},
          {"counts", h.counts},
          {"total", h.total},
          {"summary",
           {{"mean", h.summary.mean}, {"median", h.summary.median}, {"fraction_below_0.05", h.summary.fraction_below_0_05}}},
          {"mode_count", h.mode_count}};
}

nlohmann::json to_json(const DpsReport& r) {
  nlohmann::json j;
  j["format"] = "dps-report";
  j["version"] = 1;
  j["metadata"] = r.metadata;
  j["channels"] = r.channels;
  j["records"] = {{"table", "samples.csv"}, {"count", r.records.size()}};
  j["exclusions"] = {{"train_degenerate", r.exclusions.train_degenerate},
                     {"test_degenerate", r.exclusions.test_degenerate},
                     {"test_without_reference", r.exclusions.test_without_reference},
                     {"classes_below_min_size", r.exclusions.classes_below_min_size}};
  j["dataset"] = {{"dps", r.dps_dataset},
                  {"gen_gap", r.gen_gap_dataset},
                  {"n", r.records.size()},
                  {"train_accuracy", r.train_accuracy},
                  {"test_accuracy", r.test_accuracy},
                  {"accuracy_gap", r.train_accuracy - r.test_accuracy}};
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : r.classes) {
    classes.push_back({{"class", c.class_index},
                       {"train_count", c.train_count},
                       {"test_count", c.test_count},
                       {"dps", c.dps},
                       {"gen_gap", c.gen_gap},
                       {"train_mean_loss", c.train_mean_loss},
                       {"test_mean_loss", c.test_mean_loss},
                       {"train_accuracy", c.train_accuracy},
                       {"test_accuracy", c.test_accuracy}});
  }
  j["classes"] = classes;
  j["fits"] = {{"sample", to_json(r.sample_fit)},
               {"class", to_json(r.class_fit)},
               {"dataset", {{"fit", nullptr}, {"note", "dataset-level fit needs several test splits; see scenario reports"}}}};
  j["structure"] = r.structure ? nlohmann::json{{"decision_patterns", to_json(*r.structure)}} : nlohmann::json(nullptr);
  nlohmann::json taylor = nlohmann::json::array();
  for (const auto& t : r.taylor) {
    double worst = 0.0;
    for (const auto& p : t.per_sample) worst = std::max(worst, std::abs(p.loss_coordinate - p.loss_taylor2));
    taylor.push_back({{"class", t.class_index},
                      {"mean_logit", t.mean_logit},
                      {"mean_other_logsumexp", t.mean_other_logsumexp},
                      {"mean_prob", t.mean_prob},
                      {"first_order_coeff", t.first_order_coeff},
                      {"second_order_coeff", t.second_order_coeff},
                      {"test_samples", t.per_sample.size()},
                      {"max_abs_remainder", worst}});
  }
  j["taylor"] = taylor;
  j["spectrum"] = to_json(r.spectrum);
  return j;
}

std::string samples_csv(std::span<const DpsRecord> records) {
  std::string out = "sample_id,class,dps,gen_gap,loss,correct,pattern_deviation\n";
  for (const auto& r : records) {
    out += std::to_string(r.sample_id) + ',' + std::to_string(r.class_index) + ',' + format_double(r.dps) + ',' +
           format_double(r.gen_gap) + ',' + format_double(r.loss) + ',' + (r.correct ? "1" : "0") + ',' +
           format_double(r.pattern_deviation) + '\n';
  }
  return out;
}

std::string classes_csv(std::span<const ClassSummary> classes) {
  std::string out =
      "class,train_count,test_count,dps,gen_gap,train_mean_loss,test_mean_loss,train_accuracy,test_accuracy\n";
  for (const auto& c : classes) {
    out += std::to_string(c.class_index) + ',' + std::to_string(c.train_count) + ',' + std::to_string(c.test_count) +
           ',' + format_double(c.dps) + ',' + format_double(c.gen_gap) + ',' + format_double(c.train_mean_loss) + ',' +
           format_double(c.test_mean_loss) + ',' + format_double(c.train_accuracy) + ',' +
           format_double(c.test_accuracy) + '\n';
  }
  return out;
}

std::string histogram_csv(const SpectrumHistogram& h) {
  std::string out = "bin_lo,bin_hi,count\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    out += format_double(h.bin_edges[i]) + ',' + format_double(h.bin_edges[i + 1]) + ',' + std::to_string(h.counts[i]) + '\n';
  }
  return out;
}

std::string taylor_csv(std::span<const TaylorDiagnostic> diagnostics) {
  std::string out = "class,sample_id,logit_dev,loss_exact,loss_coordinate,loss_taylor2\n";
  for (const auto& d : diagnostics) {
    for (const auto& p : d.per_sample) {
      out += std::to_string(d.class_index) + ',' + std::to_string(p.sample_id) + ',' + format_double(p.logit_dev) + ',' +
             format_double(p.loss_exact) + ',' + format_double(p.loss_coordinate) + ',' +
             format_double(p.loss_taylor2) + '\n';
    }
  }
  return out;
}

DatasetRow dataset_row(const std::string& split, const DpsReport& report) {
  return {split, report.records.size(), report.dps_dataset, report.gen_gap_dataset, report.test_accuracy};
}

std::string datasets_csv(std::span<const DatasetRow> rows) {
  std::string out = "split,n,dps,gen_gap,test_accuracy\n";
  for (const auto& r : rows) {
    out += r.split + ',' + std::to_string(r.n) + ',' + format_double(r.dps) + ',' + format_double(r.gen_gap) + ',' +
           format_double(r.test_accuracy) + '\n';
  }
  return out;
}

void write_report_files(const DpsReport& report, const std::filesystem::path& dir, const std::string& prefix) {
  std::filesystem::create_directories(dir);
  const DatasetRow row = dataset_row("test", report);
  write_file(dir / (prefix + "samples.csv"), samples_csv(report.records));
  write_file(dir / (prefix + "classes.csv"), classes_csv(report.classes));
  write_file(dir / (prefix + "datasets.csv"), datasets_csv(std::span(&row, 1)));
  write_file(dir / (prefix + "histogram.csv"), histogram_csv(report.spectrum));
  write_file(dir / (prefix + "taylor.csv"), taylor_csv(report.taylor));
  auto j = to_json(report);
  j["records"]["table"] = prefix + "samples.csv";
  write_file(dir / (prefix + "report.json"), j.dump(2) + "\n");
}

}  // namespace dps
