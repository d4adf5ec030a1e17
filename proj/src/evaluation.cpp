#include "anogan/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "anogan/config_text.hpp"

namespace anogan {

RocCurve roc_curve(std::span<const ScoredSample> samples) {
  RocCurve curve;
  for (const auto& s : samples) {
    if (s.label != 0 && s.label != 1) {
      throw std::invalid_argument("roc_curve: labels must be 0 or 1");
    }
    if (std::isnan(s.score)) throw std::invalid_argument("roc_curve: NaN score");
    (s.label ? curve.positives : curve.negatives) += 1;
  }
  if (curve.positives == 0 || curve.negatives == 0) {
    throw std::invalid_argument("roc_curve: need both classes, got " +
                                std::to_string(curve.positives) + " positive and " +
                                std::to_string(curve.negatives) + " negative samples");
  }

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return samples[a].score > samples[b].score; });

  const auto p = static_cast<double>(curve.positives);
  const auto n = static_cast<double>(curve.negatives);
  curve.points.push_back(RocPoint{});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = samples[order[i]].score;
    for (; i < order.size() && samples[order[i]].score == threshold; ++i) {
      (samples[order[i]].label ? tp : fp) += 1;
    }
    curve.points.push_back(RocPoint{threshold, static_cast<double>(fp) / n,
                                    static_cast<double>(tp) / p, tp, fp});
  }
  return curve;
}

double auc(std::span<const RocPoint> points) {
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    area += (points[i].fpr - points[i - 1].fpr) * (points[i].tpr + points[i - 1].tpr) * 0.5;
  }
  return area;
}

OperatingPoint youden_point(const RocCurve& curve) {
  if (curve.points.empty() || curve.positives == 0 || curve.negatives == 0) {
    throw std::invalid_argument("youden_point: empty curve");
  }
  // Compare tpr - fpr scaled by P*N so ties are exact.
  const auto p = static_cast<long double>(curve.positives);
  const auto n = static_cast<long double>(curve.negatives);
  std::size_t best = 0;
  long double best_j = 0;
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    const auto& pt = curve.points[i];
    const long double j = static_cast<long double>(pt.true_positives) * n -
                          static_cast<long double>(pt.false_positives) * p;
    // Later points have smaller thresholds, so >= implements the tie-break.
    if (i == 0 || j >= best_j) {
      best = i;
      best_j = j;
    }
  }
  const RocPoint& pt = curve.points[best];
  OperatingPoint op;
  op.threshold = pt.threshold;
  op.tpr = pt.tpr;
  op.fpr = pt.fpr;
  op.youden_index = pt.tpr - pt.fpr;
  op.sensitivity = pt.tpr;
  op.recall = pt.tpr;
  op.specificity = static_cast<double>(curve.negatives - pt.false_positives) /
                   static_cast<double>(curve.negatives);
  const std::size_t predicted = pt.true_positives + pt.false_positives;
  op.precision = predicted == 0 ? 0.0
                                : static_cast<double>(pt.true_positives) /
                                      static_cast<double>(predicted);
  return op;
}

EvaluationReport evaluate(std::span<const ScoredSample> samples) {
  EvaluationReport report;
  report.curve = roc_curve(samples);
  report.auc = auc(report.curve.points);
  report.youden = youden_point(report.curve);
  return report;
}

void write_roc_csv(std::ostream& out, const RocCurve& curve) {
  out << "threshold,fpr,tpr\n";
  for (const auto& pt : curve.points) {
    out << (std::isinf(pt.threshold) ? std::string("inf") : text::format_double(pt.threshold))
        << ',' << text::format_double(pt.fpr) << ',' << text::format_double(pt.tpr) << '\n';
  }
}

double percentile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("percentile: empty sample");
  const double pos = std::clamp(p, 0.0, 1.0) * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

std::vector<DistributionSummary> score_distributions(
    const std::vector<std::pair<std::string, std::vector<double>>>& groups,
    std::vector<std::string>* warnings) {
  std::vector<DistributionSummary> out;
  for (const auto& [name, values] : groups) {
    if (values.empty()) {
      if (warnings) warnings->push_back("score group '" + name + "' is empty; omitted");
      continue;
    }
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    DistributionSummary s;
    s.group = name;
    s.count = sorted.size();
    s.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());
    s.median = percentile(sorted, 0.5);
    s.q1 = percentile(sorted, 0.25);
    s.q3 = percentile(sorted, 0.75);
    s.min = sorted.front();
    s.max = sorted.back();
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace anogan
