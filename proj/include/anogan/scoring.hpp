#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "anogan/gan.hpp"
#include "anogan/mapping.hpp"

namespace anogan {

// anogan: residual + feature-matching discrimination score.
// reference: residual + sigmoid cross-entropy discrimination score.
// p_d: 1 - sigmoid(D(x)) straight from the discriminator, no mapping.
enum class ScoreVariant { anogan, reference, p_d };

std::string to_string(ScoreVariant v);
ScoreVariant parse_score_variant(const std::string& s);
// The mapping loss a score variant is computed from.
DiscriminationLoss mapping_variant_for(ScoreVariant v);

struct ScoringConfig {
  double lambda = 0.1;
  ScoreVariant variant = ScoreVariant::anogan;

  void validate() const;
};

struct AnomalyReport {
  std::string query_id;
  ScoreVariant variant = ScoreVariant::anogan;
  // Larger means more anomalous, for every variant.
  double score = 0.0;
  // NaN for the p_d variant, which has no mapping.
  double residual_score = 0.0;
  double discrimination_score = 0.0;
  Tensor residual_image;
  std::optional<int> label;
  std::vector<std::string> warnings;
};

// A(x) = (1 - lambda) R(x) + lambda D(x) from the losses at the last mapping
// iteration. Throws if the mapping used a different discrimination loss than
// the variant needs; a lambda mismatch is only recorded as a warning.
AnomalyReport anomaly_score(const MappingResult& result, const ScoringConfig& config,
                            std::string query_id = {});

// |x - G(z_Gamma)|, values in [0,2].
Tensor residual_map(const MappingResult& result);

double p_d_score_from_logit(double logit);
// One score per image of x [N,1,s,s].
std::vector<double> p_d_score(const GanModel& model, const Tensor& x);
AnomalyReport p_d_report(double score, std::string query_id = {});

// True when score equals the weighted sum of its components to 1e-6 (always
// true for p_d reports).
bool report_consistent(const AnomalyReport& report, double lambda);

// Scores CSV: query_id,label,residual,discrimination,anomaly,variant
struct ScoreRow {
  std::string query_id;
  std::optional<int> label;
  double residual = 0.0;
  double discrimination = 0.0;
  double anomaly = 0.0;
  std::string variant;
};

inline constexpr const char* kScoresCsvHeader =
    "query_id,label,residual,discrimination,anomaly,variant";

void write_scores_csv(std::ostream& out, const std::vector<AnomalyReport>& reports);
std::vector<ScoreRow> read_scores_csv(std::istream& in);

}  // namespace anogan
