#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "shrimpxnet/error.hpp"
#include "shrimpxnet/rng.hpp"

namespace sxn {

// Round-half-up at the given number of decimals; report values are
// presented at 3 decimals (2 in the text table).
inline double round_half_up(double x, int digits) {
  const double scale = std::pow(10.0, digits);
  return std::floor(x * scale + 0.5) / scale;
}

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::int64_t k) : k_(k), counts_(static_cast<std::size_t>(k * k), 0) {
    if (k < 1) throw ConfigError("confusion matrix needs at least one class");
  }

  std::int64_t classes() const { return k_; }
  std::int64_t at(std::int64_t true_class, std::int64_t pred_class) const {
    return counts_[static_cast<std::size_t>(true_class * k_ + pred_class)];
  }
  std::int64_t& at(std::int64_t true_class, std::int64_t pred_class) {
    return counts_[static_cast<std::size_t>(true_class * k_ + pred_class)];
  }

  std::int64_t row_sum(std::int64_t i) const {
    std::int64_t s = 0;
    for (std::int64_t j = 0; j < k_; ++j) s += at(i, j);
    return s;
  }
  std::int64_t col_sum(std::int64_t j) const {
    std::int64_t s = 0;
    for (std::int64_t i = 0; i < k_; ++i) s += at(i, j);
    return s;
  }
  std::int64_t trace() const {
    std::int64_t s = 0;
    for (std::int64_t i = 0; i < k_; ++i) s += at(i, i);
    return s;
  }
  std::int64_t total() const { return std::accumulate(counts_.begin(), counts_.end(), std::int64_t(0)); }

 private:
  std::int64_t k_;
  std::vector<std::int64_t> counts_;
};

// Entry (i, j) counts samples with true class i predicted as j.
inline ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& labels,
                                 std::int64_t k) {
  if (preds.size() != labels.size()) {
    throw ShapeError("confusion: " + std::to_string(preds.size()) + " predictions vs " +
                     std::to_string(labels.size()) + " labels");
  }
  ConfusionMatrix m(k);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || preds[i] >= k || labels[i] < 0 || labels[i] >= k) {
      throw ShapeError("confusion: class index out of range at sample " + std::to_string(i));
    }
    ++m.at(labels[i], preds[i]);
  }
  return m;
}

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t support = 0;
};

struct AverageMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct ClassificationReport {
  std::vector<ClassMetrics> per_class;
  double accuracy = 0.0;
  AverageMetrics macro;
  AverageMetrics weighted;
  bool had_zero_division = false;  // some class had an empty row or column
};

// precision_j = M_jj / colsum_j, recall_j = M_jj / rowsum_j, F1 harmonic;
// zero denominators yield 0 and set the report flag.
inline ClassificationReport classification_report(const ConfusionMatrix& m) {
  const std::int64_t total = m.total();
  if (total == 0) throw ConfigError("classification report of an all-zero confusion matrix");
  ClassificationReport rep;
  const std::int64_t k = m.classes();
  for (std::int64_t j = 0; j < k; ++j) {
    ClassMetrics cm;
    const std::int64_t tp = m.at(j, j);
    const std::int64_t col = m.col_sum(j);
    const std::int64_t row = m.row_sum(j);
    cm.support = row;
    if (col > 0) {
      cm.precision = static_cast<double>(tp) / static_cast<double>(col);
    } else {
      rep.had_zero_division = true;
    }
    if (row > 0) {
      cm.recall = static_cast<double>(tp) / static_cast<double>(row);
    } else {
      rep.had_zero_division = true;
    }
    if (cm.precision + cm.recall > 0.0) {
      cm.f1 = 2.0 * cm.precision * cm.recall / (cm.precision + cm.recall);
    }
    rep.per_class.push_back(cm);
  }
  rep.accuracy = static_cast<double>(m.trace()) / static_cast<double>(total);
  for (const ClassMetrics& cm : rep.per_class) {
    rep.macro.precision += cm.precision / static_cast<double>(k);
    rep.macro.recall += cm.recall / static_cast<double>(k);
    rep.macro.f1 += cm.f1 / static_cast<double>(k);
    const double w = static_cast<double>(cm.support) / static_cast<double>(total);
    rep.weighted.precision += cm.precision * w;
    rep.weighted.recall += cm.recall * w;
    rep.weighted.f1 += cm.f1 * w;
  }
  return rep;
}

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocResult {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

// One-vs-rest ROC for class_c: descending threshold sweep over the
// distinct scores, trapezoid AUC. Tied scores advance TPR and FPR in a
// single step, which makes the trapezoid rule count ties as 1/2 exactly
// like the Mann-Whitney statistic.
inline RocResult roc_auc(const std::vector<double>& scores, const std::vector<int>& labels,
                         int class_c) {
  if (scores.size() != labels.size()) {
    throw ShapeError("roc_auc: score/label length mismatch");
  }
  std::int64_t positives = 0;
  for (int l : labels) positives += l == class_c ? 1 : 0;
  const std::int64_t negatives = static_cast<std::int64_t>(labels.size()) - positives;
  if (positives == 0 || negatives == 0) {
    throw DataError("roc_auc undefined: class " + std::to_string(class_c) +
                    " needs at least one positive and one negative sample");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t(0));
  std::stable_sort(order.begin(), order.end(),
                   [&scores](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocResult result;
  result.points.push_back({0.0, 0.0});
  std::int64_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      if (labels[order[i]] == class_c) {
        ++tp;
      } else {
        ++fp;
      }
      ++i;
    }
    result.points.push_back({static_cast<double>(fp) / static_cast<double>(negatives),
                             static_cast<double>(tp) / static_cast<double>(positives)});
  }
  for (std::size_t p = 1; p < result.points.size(); ++p) {
    const RocPoint& a = result.points[p - 1];
    const RocPoint& b = result.points[p];
    result.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
  }
  return result;
}

struct BootstrapCi {
  std::int64_t iterations = 0;
  double mean = 0.0;
  double stddev = 0.0;
  double z = 0.0;
  double low = 0.0;
  double high = 0.0;
};

// [mean - z*std, mean + z*std] rounded half-up to 3 decimals.
inline std::pair<double, double> ci_bounds(double mean, double stddev, double z) {
  return {round_half_up(mean - z * stddev, 3), round_half_up(mean + z * stddev, 3)};
}

// Accuracy distribution over `iterations` resamples of the prediction set
// with replacement. Each iteration draws from its own (seed, iteration)
// stream, so the result does not depend on scheduling.
inline BootstrapCi bootstrap_ci(const std::vector<int>& preds, const std::vector<int>& labels,
                                std::int64_t iterations, double z, std::uint64_t seed) {
  if (preds.empty() || preds.size() != labels.size()) {
    throw ShapeError("bootstrap_ci needs non-empty, equally sized predictions and labels");
  }
  if (iterations < 2) throw ConfigError("bootstrap_ci needs at least 2 iterations");
  const std::int64_t n = static_cast<std::int64_t>(preds.size());
  std::vector<double> accuracies(static_cast<std::size_t>(iterations));
  for (std::int64_t it = 0; it < iterations; ++it) {
    Rng rng(derive_seed(seed, "bootstrap", static_cast<std::uint64_t>(it)));
    std::int64_t correct = 0;
    for (std::int64_t i = 0; i < n; ++i) {
      const std::int64_t j = rng.uniform_int(n);
      correct += preds[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(j)] ? 1 : 0;
    }
    accuracies[static_cast<std::size_t>(it)] = static_cast<double>(correct) / static_cast<double>(n);
  }
  double mean = 0.0;
  for (double a : accuracies) mean += a;
  mean /= static_cast<double>(iterations);
  double var = 0.0;
  for (double a : accuracies) var += (a - mean) * (a - mean);
  var /= static_cast<double>(iterations - 1);
  BootstrapCi ci;
  ci.iterations = iterations;
  ci.mean = mean;
  ci.stddev = std::sqrt(var);
  ci.z = z;
  const auto [low, high] = ci_bounds(ci.mean, ci.stddev, z);
  ci.low = low;
  ci.high = high;
  return ci;
}

// Spearman rank correlation with average ranks for ties.
inline double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2) {
    throw ShapeError("spearman needs two equally sized series of length >= 2");
  }
  auto ranks = [](const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t(0));
    std::sort(order.begin(), order.end(),
              [&v](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (std::size_t p = i; p <= j; ++p) r[order[p]] = avg;
      i = j + 1;
    }
    return r;
  };
  const std::vector<double> rx = ranks(xs);
  const std::vector<double> ry = ranks(ys);
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double cov = 0.0, vx = 0.0, vy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    cov += (rx[i] - mx) * (ry[i] - my);
    vx += (rx[i] - mx) * (rx[i] - mx);
    vy += (ry[i] - my) * (ry[i] - my);
  }
  if (vx == 0.0 || vy == 0.0) return 0.0;
  return cov / std::sqrt(vx * vy);
}

struct EvalReport {
  std::vector<std::string> class_names;
  ConfusionMatrix matrix{1};
  ClassificationReport report;
  std::vector<RocResult> roc;  // one-vs-rest per class
  BootstrapCi ci;
};

// Full report from per-sample probabilities. `probs_rows[i]` holds the
// class probabilities of sample i.
inline EvalReport build_report(const std::vector<std::vector<double>>& probs_rows,
                               const std::vector<int>& labels,
                               const std::vector<std::string>& class_names,
                               std::int64_t bootstrap_iterations, double z,
                               std::uint64_t bootstrap_seed) {
  if (probs_rows.empty() || probs_rows.size() != labels.size()) {
    throw ShapeError("build_report needs non-empty, aligned probabilities and labels");
  }
  const std::int64_t k = static_cast<std::int64_t>(class_names.size());
  std::vector<int> preds(probs_rows.size());
  for (std::size_t i = 0; i < probs_rows.size(); ++i) {
    const auto& row = probs_rows[i];
    if (static_cast<std::int64_t>(row.size()) != k) {
      throw ShapeError("probability row " + std::to_string(i) + " has wrong class count");
    }
    preds[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  EvalReport report;
  report.class_names = class_names;
  report.matrix = confusion(preds, labels, k);
  report.report = classification_report(report.matrix);
  for (int c = 0; c < k; ++c) {
    std::vector<double> scores(probs_rows.size());
    for (std::size_t i = 0; i < probs_rows.size(); ++i) scores[i] = probs_rows[i][static_cast<std::size_t>(c)];
    report.roc.push_back(roc_auc(scores, labels, c));
  }
  report.ci = bootstrap_ci(preds, labels, bootstrap_iterations, z, bootstrap_seed);
  return report;
}

inline nlohmann::ordered_json report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["confusion"] = nlohmann::ordered_json::array();
  for (std::int64_t i = 0; i < report.matrix.classes(); ++i) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (std::int64_t c = 0; c < report.matrix.classes(); ++c) row.push_back(report.matrix.at(i, c));
    j["confusion"].push_back(row);
  }
  j["per_class"] = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < report.report.per_class.size(); ++c) {
    const ClassMetrics& m = report.report.per_class[c];
    nlohmann::ordered_json e;
    e["class"] = report.class_names[c];
    e["precision"] = round_half_up(m.precision, 3);
    e["recall"] = round_half_up(m.recall, 3);
    e["f1"] = round_half_up(m.f1, 3);
    e["support"] = m.support;
    j["per_class"].push_back(e);
  }
  j["macro"] = {{"precision", round_half_up(report.report.macro.precision, 3)},
                {"recall", round_half_up(report.report.macro.recall, 3)},
                {"f1", round_half_up(report.report.macro.f1, 3)}};
  j["weighted"] = {{"precision", round_half_up(report.report.weighted.precision, 3)},
                   {"recall", round_half_up(report.report.weighted.recall, 3)},
                   {"f1", round_half_up(report.report.weighted.f1, 3)}};
  j["accuracy"] = round_half_up(report.report.accuracy, 3);
  j["roc"] = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < report.roc.size(); ++c) {
    nlohmann::ordered_json e;
    e["class"] = report.class_names[c];
    e["auc"] = round_half_up(report.roc[c].auc, 3);
    nlohmann::ordered_json pts = nlohmann::ordered_json::array();
    for (const RocPoint& p : report.roc[c].points) {
      pts.push_back({round_half_up(p.fpr, 6), round_half_up(p.tpr, 6)});
    }
    e["points"] = pts;
    j["roc"].push_back(e);
  }
  j["bootstrap_ci"] = {{"iterations", report.ci.iterations},
                       {"mean", round_half_up(report.ci.mean, 3)},
                       {"std", round_half_up(report.ci.stddev, 4)},
                       {"z", report.ci.z},
                       {"low", report.ci.low},
                       {"high", report.ci.high}};
  if (report.report.had_zero_division) j["zero_division"] = true;
  return j;
}

// Fixed-width text table in the classification-report layout, two
// decimals per metric.
inline std::string report_to_text(const EvalReport& report) {
  std::size_t name_width = 12;
  for (const std::string& n : report.class_names) name_width = std::max(name_width, n.size());
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof(buf), "%*s  %9s  %9s  %9s  %9s\n", static_cast<int>(name_width), "",
                "Precision", "Recall", "F1-Score", "Support");
  out += buf;
  for (std::size_t c = 0; c < report.report.per_class.size(); ++c) {
    const ClassMetrics& m = report.report.per_class[c];
    std::snprintf(buf, sizeof(buf), "%*s  %9.2f  %9.2f  %9.2f  %9lld\n",
                  static_cast<int>(name_width), report.class_names[c].c_str(),
                  round_half_up(m.precision, 2), round_half_up(m.recall, 2),
                  round_half_up(m.f1, 2), static_cast<long long>(m.support));
    out += buf;
  }
  const std::int64_t total = report.matrix.total();
  std::snprintf(buf, sizeof(buf), "%*s  %9s  %9s  %9.2f  %9lld\n", static_cast<int>(name_width),
                "Accuracy", "", "", round_half_up(report.report.accuracy, 2),
                static_cast<long long>(total));
  out += buf;
  std::snprintf(buf, sizeof(buf), "%*s  %9.2f  %9.2f  %9.2f  %9lld\n", static_cast<int>(name_width),
                "Macro Avg", round_half_up(report.report.macro.precision, 2),
                round_half_up(report.report.macro.recall, 2),
                round_half_up(report.report.macro.f1, 2), static_cast<long long>(total));
  out += buf;
  std::snprintf(buf, sizeof(buf), "%*s  %9.2f  %9.2f  %9.2f  %9lld\n", static_cast<int>(name_width),
                "Weighted Avg", round_half_up(report.report.weighted.precision, 2),
                round_half_up(report.report.weighted.recall, 2),
                round_half_up(report.report.weighted.f1, 2), static_cast<long long>(total));
  out += buf;
  std::snprintf(buf, sizeof(buf), "\nBootstrap CI (%lld iterations, z=%.3f): mean=%.3f std=%.4f -> [%.3f, %.3f]\n",
                static_cast<long long>(report.ci.iterations), report.ci.z,
                round_half_up(report.ci.mean, 3), round_half_up(report.ci.stddev, 4), report.ci.low,
                report.ci.high);
  out += buf;
  return out;
}

}  // namespace sxn
