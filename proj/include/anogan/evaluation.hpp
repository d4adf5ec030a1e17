#pragma once

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace anogan {

struct ScoredSample {
  double score = 0.0;
  int label = 0;  // 1 = anomalous
};

// One operating point of the sweep; predicted anomalous iff score >= threshold.
struct RocPoint {
  double threshold = std::numeric_limits<double>::infinity();
  double fpr = 0.0;
  double tpr = 0.0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
};

struct RocCurve {
  // Starts at (0,0) with an infinite threshold, then one point per distinct
  // score in descending order, ending at (1,1). Tied scores form a single step.
  std::vector<RocPoint> points;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

struct OperatingPoint {
  double threshold = 0.0;
  double youden_index = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
};

struct EvaluationReport {
  RocCurve curve;
  double auc = 0.0;
  OperatingPoint youden;
};

// Throws std::invalid_argument unless both classes are present and every
// score is a number.
RocCurve roc_curve(std::span<const ScoredSample> samples);

// Trapezoidal area under the curve's (fpr, tpr) points.
double auc(std::span<const RocPoint> points);

// Maximizes tpr - fpr; ties go to the smallest threshold.
OperatingPoint youden_point(const RocCurve& curve);

EvaluationReport evaluate(std::span<const ScoredSample> samples);

// threshold,fpr,tpr (the first row's threshold is "inf").
void write_roc_csv(std::ostream& out, const RocCurve& curve);

struct DistributionSummary {
  std::string group;
  std::size_t count = 0;
  double mean = 0.0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double min = 0.0;
  double max = 0.0;
};

// Linear interpolation between closest ranks, p in [0,1]; `sorted` ascending.
double percentile(std::span<const double> sorted, double p);

// Per-group summaries in input order. Empty groups are skipped with a
// message appended to `warnings` (when given).
std::vector<DistributionSummary> score_distributions(
    const std::vector<std::pair<std::string, std::vector<double>>>& groups,
    std::vector<std::string>* warnings = nullptr);

}  // namespace anogan
