#include "skl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "skl/error.hpp"

namespace skl {

double ConfusionMatrix::accuracy() const {
  const auto n = total();
  return n == 0 ? 0.0 : double(counts.trace()) / double(n);
}

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> labels, int num_classes,
                          std::vector<std::string> class_names) {
  if (preds.size() != labels.size())
    fail(Errc::shape_mismatch, std::to_string(preds.size()) + " predictions for " + std::to_string(labels.size()) +
                                   " labels");
  if (num_classes < 1) fail(Errc::invalid_argument, "need at least one class");
  if (!class_names.empty() && int(class_names.size()) != num_classes)
    fail(Errc::shape_mismatch, "class name count differs from class count");
  ConfusionMatrix cm{std::move(class_names), Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(
                                                 num_classes, num_classes)};
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || preds[i] >= num_classes || labels[i] < 0 || labels[i] >= num_classes)
      fail(Errc::out_of_range, "class id out of range at example " + std::to_string(i));
    ++cm.counts(labels[i], preds[i]);
  }
  return cm;
}

std::vector<int> argmax_rows(const Eigen::MatrixXd& scores) {
  std::vector<int> out(std::size_t(scores.rows()));
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < scores.cols(); ++c)
      if (scores(r, c) > scores(r, best)) best = c;
    out[std::size_t(r)] = int(best);
  }
  return out;
}

double topk_accuracy(const Eigen::MatrixXd& scores, std::span<const int> labels, int k) {
  if (k < 1 || k > scores.cols())
    fail(Errc::invalid_argument, "k = " + std::to_string(k) + " with " + std::to_string(scores.cols()) + " classes");
  if (std::size_t(scores.rows()) != labels.size()) fail(Errc::shape_mismatch, "score rows differ from label count");
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    const int y = labels[std::size_t(r)];
    if (y < 0 || y >= scores.cols()) fail(Errc::out_of_range, "label out of range");
    // rank of y = classes strictly ahead of it under (score desc, id asc)
    int ahead = 0;
    for (Eigen::Index c = 0; c < scores.cols(); ++c)
      if (scores(r, c) > scores(r, y) || (scores(r, c) == scores(r, y) && c < y)) ++ahead;
    if (ahead < k) ++hits;
  }
  return double(hits) / double(labels.size());
}

std::vector<ClassStats> per_class_report(const ConfusionMatrix& cm) {
  auto ratio = [](std::int64_t num, std::int64_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return double(num) / double(den);
  };
  const std::int64_t total = cm.total();
  std::vector<ClassStats> out;
  for (int c = 0; c < cm.num_classes(); ++c) {
    ClassStats s;
    s.name = cm.class_names.empty() ? std::to_string(c) : cm.class_names[std::size_t(c)];
    s.tp = cm.counts(c, c);
    s.fp = cm.counts.col(c).sum() - s.tp;
    s.fn = cm.counts.row(c).sum() - s.tp;
    s.tn = total - s.tp - s.fp - s.fn;
    s.precision = ratio(s.tp, s.tp + s.fp);
    s.recall = ratio(s.tp, s.tp + s.fn);
    s.specificity = ratio(s.tn, s.tn + s.fp);
    s.accuracy = ratio(s.tp + s.tn, total);
    out.push_back(std::move(s));
  }
  return out;
}

RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels, std::string positive) {
  if (scores.size() != labels.size()) fail(Errc::shape_mismatch, "scores and labels differ in length");
  std::size_t pos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) fail(Errc::non_finite, "non-finite score at example " + std::to_string(i));
    if (labels[i] != 0) ++pos;
  }
  const std::size_t neg = scores.size() - pos;
  if (pos == 0 || neg == 0) fail(Errc::invalid_argument, "ROC needs both positive and negative examples");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve curve;
  curve.positive = std::move(positive);
  curve.thresholds.push_back(std::numeric_limits<double>::infinity());
  curve.fpr.push_back(0.0);
  curve.tpr.push_back(0.0);
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double t = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == t; ++i) (labels[order[i]] != 0 ? tp : fp) += 1;
    curve.thresholds.push_back(t);
    curve.fpr.push_back(double(fp) / double(neg));
    curve.tpr.push_back(double(tp) / double(pos));
  }
  return curve;
}

double auc(const RocCurve& curve) {
  double area = 0;
  for (std::size_t i = 1; i < curve.fpr.size(); ++i)
    area += (curve.fpr[i] - curve.fpr[i - 1]) * (curve.tpr[i] + curve.tpr[i - 1]) / 2;
  return area;
}

CutOff optimal_cutoff(const RocCurve& curve, CutoffRule rule) {
  CutOff best;
  double best_key = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < curve.thresholds.size(); ++i) {
    const double d = std::hypot(curve.fpr[i], 1.0 - curve.tpr[i]);
    const double key = rule == CutoffRule::youden ? curve.fpr[i] - curve.tpr[i] : d;
    if (key < best_key) {
      best_key = key;
      best = {curve.thresholds[i], curve.tpr[i], curve.fpr[i], d};
    }
  }
  return best;
}

OneVsRestReport one_vs_rest_report(const Eigen::MatrixXd& scores, std::span<const int> labels,
                                   const std::vector<std::string>& class_names, CutoffRule rule) {
  const int k = int(scores.cols());
  if (k < 2) fail(Errc::invalid_argument, "one-vs-rest needs at least two classes");
  if (int(class_names.size()) != k) fail(Errc::shape_mismatch, "class name count differs from score columns");
  if (std::size_t(scores.rows()) != labels.size()) fail(Errc::shape_mismatch, "score rows differ from label count");

  OneVsRestReport report;
  const auto preds = argmax_rows(scores);
  report.confusion = confusion(preds, labels, k, class_names);
  report.accuracy = report.confusion.accuracy();
  std::vector<double> column(labels.size());
  std::vector<int> binary(labels.size());
  for (int c = 0; c < k; ++c) {
    ClassRoc entry{class_names[std::size_t(c)], std::nullopt, std::nullopt, std::nullopt};
    std::size_t pos = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      column[i] = scores(Eigen::Index(i), c);
      binary[i] = labels[i] == c;
      pos += std::size_t(binary[i]);
    }
    if (pos > 0 && pos < labels.size()) {
      entry.curve = roc_curve(column, binary, entry.name);
      entry.auc = auc(*entry.curve);
      entry.cutoff = optimal_cutoff(*entry.curve, rule);
    }
    report.classes.push_back(std::move(entry));
  }
  return report;
}

namespace {

std::string fixed(double v, int digits) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s + ' ' : s + std::string(width - s.size(), ' ');
}

}  // namespace

std::string render_report_text(const OneVsRestReport& report) {
  std::size_t width = std::string("Lesion").size();
  for (const auto& c : report.classes) width = std::max(width, c.name.size());
  width += 2;

  std::string out = pad("Lesion", width) + "AUC\n";
  for (const auto& c : report.classes) out += pad(c.name, width) + (c.auc ? fixed(*c.auc, 2) : "-") + '\n';

  out += '\n' + pad("Lesion", width) + "Cut-off    Sensitivity  Specificity\n";
  for (const auto& c : report.classes) {
    out += pad(c.name, width);
    if (!c.cutoff) {
      out += "-\n";
      continue;
    }
    out += pad(fixed(c.cutoff->threshold, 4), 11) + pad(fixed(c.cutoff->tpr, 4), 13) + fixed(1.0 - c.cutoff->fpr, 4) +
           '\n';
  }
  out += "\nOverall accuracy: " + fixed(report.accuracy, 4) + " (" + std::to_string(report.confusion.counts.trace()) +
         "/" + std::to_string(report.confusion.total()) + ")\n";
  return out;
}

std::string render_report_jsonl(const OneVsRestReport& report) {
  std::string out;
  for (const auto& c : report.classes) {
    nlohmann::json j{{"name", c.name}, {"auc", nullptr}, {"threshold", nullptr}, {"tpr", nullptr}, {"fpr", nullptr}};
    if (c.auc) j["auc"] = *c.auc;
    if (c.cutoff) {
      // +inf has no JSON spelling; it stays null
      if (std::isfinite(c.cutoff->threshold)) j["threshold"] = c.cutoff->threshold;
      j["tpr"] = c.cutoff->tpr;
      j["fpr"] = c.cutoff->fpr;
    }
    out += j.dump() + '\n';
  }
  return out;
}

std::string render_roc_csv(const OneVsRestReport& report) {
  std::string out = "class,threshold,fpr,tpr\n";
  for (const auto& c : report.classes) {
    if (!c.curve) continue;
    const std::string name = c.name.find(',') == std::string::npos ? c.name : '"' + c.name + '"';
    for (std::size_t i = 0; i < c.curve->thresholds.size(); ++i)
      out += name + ',' + fixed(c.curve->thresholds[i], 9) + ',' + fixed(c.curve->fpr[i], 9) + ',' +
             fixed(c.curve->tpr[i], 9) + '\n';
  }
  return out;
}

}  // namespace skl
