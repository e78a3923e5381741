#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "volscan/common.hpp"

namespace volscan {

// ROC point at one decision threshold (predict positive when score >= t).
// Points are ordered by descending threshold and start at the (0,0) sentinel
// (threshold +inf); the last point is (1,1) at the minimum score.
struct RocPoint {
  double threshold;
  double tpr;
  double fpr;
};

struct RocCurve {
  std::vector<RocPoint> points;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

RocCurve roc_curve(const std::vector<double>& scores, const std::vector<int>& labels);

// Trapezoidal area under the ROC with tied scores grouped into a single
// threshold. The doubled area is accumulated in exact integers, which makes
// this bitwise-equal to the Mann-Whitney form.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

// O(P*N) brute-force pair count: wins + half credit for ties, over P*N.
double auc_oracle(const std::vector<double>& scores, const std::vector<int>& labels);

struct OperatingPoint {
  double threshold = 0;
  double sensitivity = 0;
  double specificity = 0;
  double f1 = 0;
  double youden_j = 0;
};

// Maximizes J = TPR - FPR; ties break toward the higher threshold.
OperatingPoint youden_point(const RocCurve& roc);

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double sensitivity = 0, specificity = 0, precision = 0, f1 = 0;
};

Confusion confusion_metrics(const std::vector<double>& scores, const std::vector<int>& labels,
                            double threshold);

// ----------------------------------------------------------------- reports ---

struct EvalReportRow {
  std::string model;
  double auc = 0, threshold = 0, sensitivity = 0, specificity = 0, f1 = 0;
  std::size_t n_pos = 0, n_neg = 0;
};

// CSV `model,auc,threshold,sensitivity,specificity,f1,n_pos,n_neg`.
void write_report_csv(const std::filesystem::path& path,
                      const std::vector<EvalReportRow>& rows);

// CSV `fpr,tpr,threshold`, one row per ROC point.
void write_roc_csv(const std::filesystem::path& path, const RocCurve& roc);

// Monotone ROC polyline from (0,0) to (1,1) plus axes and the chance diagonal.
void write_roc_svg(const std::filesystem::path& path, const RocCurve& roc);

std::string format_double(double v);

}  // namespace volscan
