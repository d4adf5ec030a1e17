#include "run_config.hpp"

#include <stdexcept>

#include "anogan/config_text.hpp"

namespace anogan::cli {

namespace {

std::string prefixed(const std::string& prefix, const std::string& body) {
  const auto kv = text::KeyValues::parse(body);
  std::string out;
  for (const auto& [k, v] : kv.items()) out += prefix + k + "=" + v + "\n";
  return out;
}

}  // namespace

RunConfig RunConfig::for_profile(const std::string& profile) {
  RunConfig c;
  c.profile = profile;
  if (profile == "desk") {
    c.gan = GanConfig::desk();
    c.corpus = SyntheticCorpusConfig::desk();
  } else if (profile == "paper") {
    c.gan = GanConfig::paper();
    c.corpus = SyntheticCorpusConfig::paper();
  } else {
    throw std::invalid_argument("unknown profile '" + profile + "' (expected desk or paper)");
  }
  return c;
}

std::string RunConfig::to_text() const {
  std::string out = "profile=" + profile + "\n";
  out += prefixed("gan.", gan.to_text());
  out += prefixed("mapping.", mapping.to_text());
  out += "scoring.lambda=" + text::format_double(scoring.lambda) + "\n";
  out += "scoring.variant=" + to_string(scoring.variant) + "\n";
  out += prefixed("synth.", corpus.to_text());
  return out;
}

RunConfig RunConfig::from_text(const std::string& body, const std::string& profile_override) {
  const auto kv = text::KeyValues::parse(body);
  for (const auto& [k, v] : kv.items()) {
    const bool known = k == "profile" || k.rfind("gan.", 0) == 0 || k.rfind("mapping.", 0) == 0 ||
                       k.rfind("scoring.", 0) == 0 || k.rfind("synth.", 0) == 0;
    if (!known) throw std::invalid_argument("run config: unknown key '" + k + "'");
  }
  std::string profile = "desk";
  if (kv.has("profile")) profile = kv.get("profile");
  if (!profile_override.empty()) profile = profile_override;

  RunConfig c = for_profile(profile);
  c.gan = GanConfig::from_text(kv.with_prefix("gan.").to_text(), c.gan);
  c.mapping = MappingConfig::from_text(kv.with_prefix("mapping.").to_text(), c.mapping);
  c.corpus = SyntheticCorpusConfig::from_text(kv.with_prefix("synth.").to_text(), c.corpus);
  const auto scoring = kv.with_prefix("scoring.");
  scoring.require_known({"lambda", "variant"}, "ScoringConfig");
  if (scoring.has("lambda")) c.scoring.lambda = scoring.get_double("lambda");
  if (scoring.has("variant")) c.scoring.variant = parse_score_variant(scoring.get("variant"));
  return c;
}

}  // namespace anogan::cli
