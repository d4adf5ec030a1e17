#include "anogan/scoring.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "anogan/config_text.hpp"

namespace anogan {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string csv_number(double v) { return std::isnan(v) ? std::string() : text::format_double(v); }

double parse_number(const std::string& field, const std::string& what, std::size_t line) {
  if (field.empty() || field == "nan") return kNaN;
  try {
    std::size_t used = 0;
    const double v = std::stod(field, &used);
    if (used == field.size()) return v;
  } catch (const std::logic_error&) {
  }
  throw std::invalid_argument("scores csv line " + std::to_string(line) + ": bad " + what +
                              " '" + field + "'");
}

}  // namespace

std::string to_string(ScoreVariant v) {
  switch (v) {
    case ScoreVariant::anogan: return "anogan";
    case ScoreVariant::reference: return "reference";
    case ScoreVariant::p_d: return "pd";
  }
  return "?";
}

ScoreVariant parse_score_variant(const std::string& s) {
  if (s == "anogan") return ScoreVariant::anogan;
  if (s == "reference") return ScoreVariant::reference;
  if (s == "pd" || s == "p_d") return ScoreVariant::p_d;
  throw std::invalid_argument("unknown score variant '" + s + "' (expected anogan, reference, pd)");
}

DiscriminationLoss mapping_variant_for(ScoreVariant v) {
  if (v == ScoreVariant::p_d) {
    throw std::invalid_argument("the pd variant is computed without latent mapping");
  }
  return v == ScoreVariant::anogan ? DiscriminationLoss::feature_matching
                                   : DiscriminationLoss::reference;
}

void ScoringConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("ScoringConfig: lambda must lie in [0,1]");
  }
}

AnomalyReport anomaly_score(const MappingResult& result, const ScoringConfig& config,
                            std::string query_id) {
  config.validate();
  if (result.loss_trajectory.empty()) {
    throw std::invalid_argument("anomaly_score: mapping result is incomplete");
  }
  if (mapping_variant_for(config.variant) != result.variant) {
    throw std::invalid_argument("anomaly_score: variant " + to_string(config.variant) +
                                " needs a " + to_string(mapping_variant_for(config.variant)) +
                                " mapping, result was mapped with " + to_string(result.variant));
  }
  AnomalyReport r;
  r.query_id = std::move(query_id);
  r.variant = config.variant;
  r.residual_score = result.residual_loss_final;
  r.discrimination_score = result.discrimination_loss_final;
  r.score = combine_losses(r.residual_score, r.discrimination_score, config.lambda);
  r.residual_image = result.residual_image;
  if (result.lambda != config.lambda) {
    r.warnings.push_back("lambda mismatch: mapping used " + text::format_double(result.lambda) +
                         ", scoring uses " + text::format_double(config.lambda));
  }
  return r;
}

Tensor residual_map(const MappingResult& result) { return result.residual_image.clone(); }

double p_d_score_from_logit(double logit) {
  // 1 - sigmoid(l) == sigmoid(-l)
  return logit >= 0.0 ? std::exp(-logit) / (1.0 + std::exp(-logit)) : 1.0 / (1.0 + std::exp(logit));
}

std::vector<double> p_d_score(const GanModel& model, const Tensor& x) {
  const Tensor logits = discriminate(model, x).logits;
  std::vector<double> out;
  out.reserve(logits.numel());
  for (float l : logits.data()) out.push_back(p_d_score_from_logit(l));
  return out;
}

AnomalyReport p_d_report(double score, std::string query_id) {
  AnomalyReport r;
  r.query_id = std::move(query_id);
  r.variant = ScoreVariant::p_d;
  r.score = score;
  r.residual_score = kNaN;
  r.discrimination_score = kNaN;
  return r;
}

bool report_consistent(const AnomalyReport& report, double lambda) {
  if (report.variant == ScoreVariant::p_d) return true;
  const double expected = combine_losses(report.residual_score, report.discrimination_score, lambda);
  return std::fabs(report.score - expected) <= 1e-6 * std::max(1.0, std::fabs(expected));
}

void write_scores_csv(std::ostream& out, const std::vector<AnomalyReport>& reports) {
  out << kScoresCsvHeader << '\n';
  for (const auto& r : reports) {
    if (r.query_id.find(',') != std::string::npos) {
      throw std::invalid_argument("write_scores_csv: query id contains a comma: " + r.query_id);
    }
    out << r.query_id << ',' << (r.label ? std::to_string(*r.label) : std::string()) << ','
        << csv_number(r.residual_score) << ',' << csv_number(r.discrimination_score) << ','
        << csv_number(r.score) << ',' << to_string(r.variant) << '\n';
  }
}

std::vector<ScoreRow> read_scores_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("scores csv: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kScoresCsvHeader) {
    throw std::invalid_argument("scores csv: unexpected header '" + line + "'");
  }
  std::vector<ScoreRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 6) {
      throw std::invalid_argument("scores csv line " + std::to_string(lineno) + ": expected 6 fields");
    }
    ScoreRow row;
    row.query_id = f[0];
    if (!f[1].empty()) {
      if (f[1] != "0" && f[1] != "1") {
        throw std::invalid_argument("scores csv line " + std::to_string(lineno) +
                                    ": label must be 0 or 1");
      }
      row.label = f[1] == "1" ? 1 : 0;
    }
    row.residual = parse_number(f[2], "residual", lineno);
    row.discrimination = parse_number(f[3], "discrimination", lineno);
    row.anomaly = parse_number(f[4], "anomaly", lineno);
    if (std::isnan(row.anomaly)) {
      throw std::invalid_argument("scores csv line " + std::to_string(lineno) + ": missing anomaly score");
    }
    row.variant = to_string(parse_score_variant(f[5]));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace anogan
