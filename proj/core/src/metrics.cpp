#include "dps/metrics.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <numeric>

#include "dps/error.hpp"

namespace dps {

namespace {

double softplus(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

std::vector<DpsRecord> sorted_records(std::span<const DpsRecord> records) {
  std::vector<DpsRecord> out(records.begin(), records.end());
  std::sort(out.begin(), out.end(), [](const DpsRecord& a, const DpsRecord& b) {
    if (a.sample_id != b.sample_id) return a.sample_id < b.sample_id;
    if (a.class_index != b.class_index) return a.class_index < b.class_index;
    return a.dps < b.dps;
  });
  return out;
}

}  // namespace

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(Errc::input_shape, "cosine of vectors with different lengths");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (!(na > kZeroNormEpsilon) || !(nb > kZeroNormEpsilon)) {
    throw Error(Errc::degenerate_pattern, "cosine of a zero vector");
  }
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

double intra_class_consistency(std::span<const std::vector<double>> vectors) {
  const std::size_t n = vectors.size();
  if (n < 2) throw Error(Errc::insufficient_samples, "intra-class consistency needs at least two samples");
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) sum += cosine(vectors[i], vectors[j]);
  }
  return sum / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

double intra_class_consistency(std::span<const DecisionPattern> patterns, std::uint32_t class_index) {
  std::vector<const DecisionPattern*> members;
  for (const auto& p : patterns) {
    if (p.true_class == class_index && !p.degenerate()) members.push_back(&p);
  }
  std::stable_sort(members.begin(), members.end(),
                   [](const auto* a, const auto* b) { return a->sample_id < b->sample_id; });
  std::vector<std::vector<double>> vectors;
  vectors.reserve(members.size());
  for (const auto* p : members) vectors.push_back(p->pattern);
  return intra_class_consistency(vectors);
}

Confusability inter_class_confusability(std::span<const ClassReference> refs, std::uint32_t class_index) {
  if (refs.size() < 2) throw Error(Errc::insufficient_classes, "inter-class confusability needs two classes");
  const ClassReference* self = nullptr;
  for (const auto& r : refs) {
    if (r.class_index == class_index) self = &r;
  }
  if (!self) throw Error(Errc::reference_mismatch, "no reference for class " + std::to_string(class_index));
  Confusability best{-2.0, 0};
  bool found = false;
  for (const auto& r : refs) {
    if (r.class_index == class_index) continue;
    const double c = cosine(self->mean_pattern, r.mean_pattern);
    if (!found || c > best.value || (c == best.value && r.class_index < best.nearest_class)) {
      best = {c, r.class_index};
      found = true;
    }
  }
  if (!found) throw Error(Errc::insufficient_classes, "no other class reference");
  return best;
}

double dps_sample(const DecisionPattern& p, const ClassReference& ref) {
  if (p.class_used != ref.class_index) {
    throw Error(Errc::reference_mismatch, "pattern for class " + std::to_string(p.class_used) +
                                              " scored against reference of class " + std::to_string(ref.class_index));
  }
  if (p.degenerate()) throw Error(Errc::degenerate_pattern, "pattern has zero norm");
  if (ref.sample_count == 0) throw Error(Errc::empty_class, "empty class reference");
  return 1.0 - cosine(p.pattern, ref.mean_pattern);
}

double dps_class(std::span<const DpsRecord> records, std::uint32_t class_index) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : sorted_records(records)) {
    if (r.class_index != class_index) continue;
    sum += r.dps;
    ++n;
  }
  if (n == 0) throw Error(Errc::empty_class, "no records for class " + std::to_string(class_index));
  return sum / static_cast<double>(n);
}

double dps_dataset(std::span<const DpsRecord> records) {
  if (records.empty()) throw Error(Errc::empty_input, "no records");
  double sum = 0.0;
  for (const auto& r : sorted_records(records)) sum += r.dps;
  return sum / static_cast<double>(records.size());
}

double gen_gap_sample(double loss, double class_train_mean_loss) { return loss - class_train_mean_loss; }

std::vector<double> gen_gaps(std::span<const double> losses, std::span<const double> class_train_mean_losses) {
  if (losses.size() != class_train_mean_losses.size()) throw Error(Errc::input_shape, "gen_gaps length mismatch");
  std::vector<double> out(losses.size());
  for (std::size_t i = 0; i < losses.size(); ++i) out[i] = gen_gap_sample(losses[i], class_train_mean_losses[i]);
  return out;
}

FitResult pearson_fit(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw Error(Errc::input_shape, "pearson_fit arrays differ in length");
  const std::size_t n = xs.size();
  if (n < 3) throw Error(Errc::insufficient_samples, "pearson_fit needs n >= 3");
  const double dn = static_cast<double>(n);
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= dn;
  my /= dn;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (!(sxx / dn > 1e-15) || !(syy / dn > 1e-15)) {
    throw Error(Errc::degenerate_fit, "zero-variance input to pearson_fit");
  }
  FitResult f;
  f.n = n;
  f.pearson_r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.p_value_note = "n=" + std::to_string(n) + "; significance not computed";
  return f;
}

TaylorDiagnostic taylor_diagnostic(std::span<const DecisionPattern> train, std::span<const DecisionPattern> test,
                                   std::uint32_t class_index) {
  std::vector<const DecisionPattern*> tr, te;
  for (const auto& p : train) {
    if (p.true_class == class_index) tr.push_back(&p);
  }
  for (const auto& p : test) {
    if (p.true_class == class_index) te.push_back(&p);
  }
  if (tr.empty()) throw Error(Errc::empty_class, "no training samples for class " + std::to_string(class_index));
  auto by_id = [](const auto* a, const auto* b) { return a->sample_id < b->sample_id; };
  std::stable_sort(tr.begin(), tr.end(), by_id);
  std::stable_sort(te.begin(), te.end(), by_id);

  TaylorDiagnostic d;
  d.class_index = class_index;
  double g_sum = 0.0, other_sum = 0.0;
  for (const auto* p : tr) {
    g_sum += p->class_logit;
    // loss = log(1 + S_other / e^g)  =>  log S_other = g + log(expm1(loss))
    other_sum += p->class_logit + std::log(std::expm1(std::max(p->loss, DBL_MIN)));
  }
  d.mean_logit = g_sum / static_cast<double>(tr.size());
  d.mean_other_logsumexp = other_sum / static_cast<double>(tr.size());
  const double t = d.mean_other_logsumexp - d.mean_logit;
  const double base_loss = softplus(t);  // -log P
  d.mean_prob = 1.0 / (1.0 + std::exp(t));
  d.first_order_coeff = d.mean_prob - 1.0;
  d.second_order_coeff = 0.5 * (d.mean_prob * (1.0 - d.mean_prob));
  for (const auto* p : te) {
    TaylorPoint pt;
    pt.sample_id = p->sample_id;
    pt.logit_dev = p->class_logit - d.mean_logit;
    pt.loss_exact = p->loss;
    pt.loss_coordinate = softplus(d.mean_other_logsumexp - p->class_logit);
    pt.loss_taylor2 = base_loss + d.first_order_coeff * pt.logit_dev +
                      d.second_order_coeff * pt.logit_dev * pt.logit_dev;
    d.per_sample.push_back(pt);
  }
  return d;
}

SpectrumHistogram spectrum_histogram(std::span<const double> dps_values, std::size_t num_bins) {
  if (dps_values.empty()) throw Error(Errc::empty_input, "no DPS values");
  if (num_bins < 2) throw Error(Errc::config, "spectrum needs at least two bins");
  SpectrumHistogram h;
  h.bin_edges.resize(num_bins + 1);
  for (std::size_t i = 0; i <= num_bins; ++i) h.bin_edges[i] = 2.0 * static_cast<double>(i) / static_cast<double>(num_bins);
  h.counts.assign(num_bins, 0);
  const double width = 2.0 / static_cast<double>(num_bins);
  std::vector<double> sorted(dps_values.begin(), dps_values.end());
  std::sort(sorted.begin(), sorted.end());
  double sum = 0.0;
  std::size_t below = 0;
  for (double v : sorted) {
    const double d = std::clamp(v, 0.0, 2.0);
    auto idx = static_cast<std::size_t>(std::min(d / width, static_cast<double>(num_bins - 1)));
    while (idx > 0 && d < h.bin_edges[idx]) --idx;
    while (idx + 1 < num_bins && d >= h.bin_edges[idx + 1]) ++idx;
    ++h.counts[idx];
    sum += v;
    if (v < 0.05) ++below;
  }
  const std::size_t n = sorted.size();
  h.total = n;
  h.summary.mean = sum / static_cast<double>(n);
  h.summary.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  h.summary.fraction_below_0_05 = static_cast<double>(below) / static_cast<double>(n);
  h.mode_count = count_modes(h.counts);
  return h;
}

SpectrumHistogram spectrum_histogram(std::span<const DpsRecord> records, std::size_t num_bins) {
  std::vector<double> values;
  values.reserve(records.size());
  for (const auto& r : sorted_records(records)) values.push_back(r.dps);
  return spectrum_histogram(std::span<const double>(values), num_bins);
}

std::size_t count_modes(std::span<const std::size_t> counts) {
  const std::size_t n = counts.size();
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i == 0 ? 0 : i - 1;
    const std::size_t hi = std::min(n - 1, i + 1);
    double acc = 0.0;
    for (std::size_t j = lo; j <= hi; ++j) acc += static_cast<double>(counts[j]);
    s[i] = acc / static_cast<double>(hi - lo + 1);
  }
  std::size_t modes = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (s[i] <= 0.0) continue;
    const bool rises = i == 0 || s[i] > s[i - 1];
    // Plateaus count once, at their left end.
    std::size_t j = i;
    while (j + 1 < n && s[j + 1] == s[i]) ++j;
    const bool falls = j + 1 == n || s[j + 1] < s[i];
    if (rises && falls) ++modes;
  }
  return modes;
}

}  // namespace dps
