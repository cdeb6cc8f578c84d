#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace skl {

struct ConfusionMatrix {
  std::vector<std::string> class_names;
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> counts;  ///< rows true, columns predicted

  int num_classes() const noexcept { return int(counts.rows()); }
  std::int64_t total() const { return counts.sum(); }
  double accuracy() const;
};

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> labels, int num_classes,
                          std::vector<std::string> class_names = {});

/// Highest-scoring column per row, lower class id on ties.
std::vector<int> argmax_rows(const Eigen::MatrixXd& scores);

/// Ties rank the lower class id first.
double topk_accuracy(const Eigen::MatrixXd& scores, std::span<const int> labels, int k);

struct ClassStats {
  std::string name;
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  // nullopt when the denominator is zero
  std::optional<double> precision, recall, specificity, accuracy;
};

std::vector<ClassStats> per_class_report(const ConfusionMatrix& cm);

struct RocCurve {
  std::string positive;
  std::vector<double> thresholds;  ///< +inf first, then unique scores descending
  std::vector<double> fpr;
  std::vector<double> tpr;
};

/// Predicted positive iff score >= threshold. Labels are binary (non-zero is positive).
RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels, std::string positive = {});
double auc(const RocCurve& curve);

enum class CutoffRule { closest_to_ideal, youden };

struct CutOff {
  double threshold = 0;
  double tpr = 0;
  double fpr = 0;
  double distance = 0;  ///< to (fpr 0, tpr 1)
};

/// Earliest (highest-threshold) point wins ties.
CutOff optimal_cutoff(const RocCurve& curve, CutoffRule rule = CutoffRule::closest_to_ideal);

struct ClassRoc {
  std::string name;
  std::optional<RocCurve> curve;  ///< nullopt when the class has no positives or no negatives
  std::optional<double> auc;
  std::optional<CutOff> cutoff;
};

struct OneVsRestReport {
  std::vector<ClassRoc> classes;
  ConfusionMatrix confusion;
  double accuracy = 0;
};

OneVsRestReport one_vs_rest_report(const Eigen::MatrixXd& scores, std::span<const int> labels,
                                   const std::vector<std::string>& class_names,
                                   CutoffRule rule = CutoffRule::closest_to_ideal);

/// Lesion/AUC table, cut-off table, overall accuracy.
std::string render_report_text(const OneVsRestReport& report);
/// One JSON object per class: name, auc, threshold, tpr, fpr.
std::string render_report_jsonl(const OneVsRestReport& report);
/// class,threshold,fpr,tpr rows for every available curve.
std::string render_roc_csv(const OneVsRestReport& report);

}  // namespace skl
