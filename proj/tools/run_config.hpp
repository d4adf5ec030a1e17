#pragma once

#include <string>

#include "anogan/data.hpp"
#include "anogan/gan.hpp"
#include "anogan/mapping.hpp"
#include "anogan/scoring.hpp"

namespace anogan::cli {

// Every parameter a command can use. Text form is the canonical key=value
// format with one prefix per block: gan., mapping., scoring., synth.
struct RunConfig {
  std::string profile = "desk";
  GanConfig gan = GanConfig::desk();
  MappingConfig mapping;
  ScoringConfig scoring;
  SyntheticCorpusConfig corpus = SyntheticCorpusConfig::desk();

  static RunConfig for_profile(const std::string& profile);

  std::string to_text() const;
  // Profile defaults first (the file's own profile= line unless
  // `profile_override` is set), then the file's keys.
  static RunConfig from_text(const std::string& text, const std::string& profile_override);
};

}  // namespace anogan::cli
