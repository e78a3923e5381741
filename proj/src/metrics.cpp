#include "volscan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>

namespace volscan {

namespace {

struct TieGroups {
  // Per unique score (descending): score value, positives, negatives.
  std::vector<double> score;
  std::vector<std::size_t> pos, neg;
  std::size_t n_pos = 0, n_neg = 0;
};

TieGroups group_by_score(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw ValueError("metrics: scores and labels length mismatch");
  if (scores.empty()) throw ValueError("metrics: empty score set");
  for (double s : scores)
    if (!std::isfinite(s)) throw ValueError("metrics: non-finite score");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  TieGroups g;
  for (std::size_t k = 0; k < order.size();) {
    std::size_t j = k, p = 0, n = 0;
    while (j < order.size() && scores[order[j]] == scores[order[k]]) {
      (labels[order[j]] ? p : n)++;
      ++j;
    }
    g.score.push_back(scores[order[k]]);
    g.pos.push_back(p);
    g.neg.push_back(n);
    g.n_pos += p;
    g.n_neg += n;
    k = j;
  }
  if (g.n_pos == 0 || g.n_neg == 0)
    throw ValueError("metrics: both classes must be present (got " + std::to_string(g.n_pos) +
                     " positives, " + std::to_string(g.n_neg) + " negatives)");
  return g;
}

}  // namespace

RocCurve roc_curve(const std::vector<double>& scores, const std::vector<int>& labels) {
  const TieGroups g = group_by_score(scores, labels);
  RocCurve roc;
  roc.n_pos = g.n_pos;
  roc.n_neg = g.n_neg;
  roc.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < g.score.size(); ++k) {
    tp += g.pos[k];
    fp += g.neg[k];
    roc.points.push_back(
        {g.score[k], double(tp) / double(g.n_pos), double(fp) / double(g.n_neg)});
  }
  return roc;
}

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  const TieGroups g = group_by_score(scores, labels);
  // 2*area*P*N = sum over groups of dFP * (TP_before + TP_after), exactly.
  std::uint64_t tp = 0, area2 = 0;
  for (std::size_t k = 0; k < g.score.size(); ++k) {
    area2 += std::uint64_t(g.neg[k]) * (2 * tp + g.pos[k]);
    tp += g.pos[k];
  }
  return double(area2) / (2.0 * double(g.n_pos) * double(g.n_neg));
}

double auc_oracle(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw ValueError("metrics: scores and labels length mismatch");
  std::size_t n_pos = 0, n_neg = 0;
  for (int y : labels) (y ? n_pos : n_neg)++;
  if (n_pos == 0 || n_neg == 0)
    throw ValueError("metrics: both classes must be present");
  double credit = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      if (scores[i] > scores[j])
        credit += 1.0;
      else if (scores[i] == scores[j])
        credit += 0.5;
    }
  }
  return credit / (double(n_pos) * double(n_neg));
}

OperatingPoint youden_point(const RocCurve& roc) {
  if (roc.points.empty()) throw ValueError("youden_point: empty ROC");
  std::size_t best = 0;
  double best_j = -2;
  for (std::size_t k = 0; k < roc.points.size(); ++k) {
    const double j = roc.points[k].tpr - roc.points[k].fpr;
    if (j > best_j) {  // strict: ties keep the earlier (higher) threshold
      best_j = j;
      best = k;
    }
  }
  OperatingPoint op;
  op.threshold = roc.points[best].threshold;
  op.sensitivity = roc.points[best].tpr;
  op.specificity = 1.0 - roc.points[best].fpr;
  op.youden_j = best_j;
  // Rates are exact ratios of counts, so this recovers the integers.
  const double tp = std::llround(op.sensitivity * double(roc.n_pos));
  const double fp = std::llround(roc.points[best].fpr * double(roc.n_neg));
  const double fn = double(roc.n_pos) - tp;
  const double denom = 2 * tp + fp + fn;
  op.f1 = denom > 0 ? 2 * tp / denom : 0.0;
  return op;
}

Confusion confusion_metrics(const std::vector<double>& scores, const std::vector<int>& labels,
                            double threshold) {
  if (scores.size() != labels.size())
    throw ValueError("metrics: scores and labels length mismatch");
  if (scores.empty()) throw ValueError("metrics: empty score set");
  Confusion c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (labels[i])
      (pred ? c.tp : c.fn)++;
    else
      (pred ? c.fp : c.tn)++;
  }
  c.sensitivity = c.tp + c.fn ? double(c.tp) / double(c.tp + c.fn) : 0.0;
  c.specificity = c.tn + c.fp ? double(c.tn) / double(c.tn + c.fp) : 0.0;
  c.precision = c.tp + c.fp ? double(c.tp) / double(c.tp + c.fp) : 0.0;
  const double pr = c.precision + c.sensitivity;
  c.f1 = pr > 0 ? 2.0 * c.precision * c.sensitivity / pr : 0.0;
  return c;
}

// ----------------------------------------------------------------- reports ---

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void write_report_csv(const std::filesystem::path& path,
                      const std::vector<EvalReportRow>& rows) {
  std::string out = "model,auc,threshold,sensitivity,specificity,f1,n_pos,n_neg\n";
  for (const auto& r : rows)
    out += r.model + "," + format_double(r.auc) + "," + format_double(r.threshold) + "," +
           format_double(r.sensitivity) + "," + format_double(r.specificity) + "," +
           format_double(r.f1) + "," + std::to_string(r.n_pos) + "," + std::to_string(r.n_neg) +
           "\n";
  atomic_write_file(path, out);
}

void write_roc_csv(const std::filesystem::path& path, const RocCurve& roc) {
  std::string out = "fpr,tpr,threshold\n";
  for (const auto& p : roc.points)
    out += format_double(p.fpr) + "," + format_double(p.tpr) + "," +
           (std::isinf(p.threshold) ? "inf" : format_double(p.threshold)) + "\n";
  atomic_write_file(path, out);
}

void write_roc_svg(const std::filesystem::path& path, const RocCurve& roc) {
  const double size = 480, margin = 40, span = size - 2 * margin;
  const auto sx = [&](double fpr) { return margin + fpr * span; };
  const auto sy = [&](double tpr) { return size - margin - tpr * span; };
  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 480 480\" width=\"480\" "
         "height=\"480\">\n";
  svg += "<rect width=\"480\" height=\"480\" fill=\"white\"/>\n";
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n",
                sx(0), sy(0), sx(1), sy(0));
  svg += buf;
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n",
                sx(0), sy(0), sx(0), sy(1));
  svg += buf;
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#999\" "
                "stroke-dasharray=\"4 4\"/>\n",
                sx(0), sy(0), sx(1), sy(1));
  svg += buf;
  svg += "<polyline fill=\"none\" stroke=\"#0057b8\" stroke-width=\"2\" points=\"";
  for (const auto& p : roc.points) {
    std::snprintf(buf, sizeof buf, "%.3f,%.3f ", sx(p.fpr), sy(p.tpr));
    svg += buf;
  }
  if (!roc.points.empty()) svg.pop_back();
  svg += "\"/>\n";
  svg += "<text x=\"220\" y=\"470\" font-size=\"14\">FPR</text>\n";
  svg += "<text x=\"8\" y=\"230\" font-size=\"14\" transform=\"rotate(-90 14 230)\">TPR"
         "</text>\n";
  svg += "</svg>\n";
  atomic_write_file(path, svg);
}

}  // namespace volscan
