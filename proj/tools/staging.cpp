#include "staging.hpp"

#include <stdexcept>

namespace anogan::cli {

namespace fs = std::filesystem;

StagingDir::StagingDir(const std::string& out) : out_(out) {
  if (out.empty()) throw std::invalid_argument("--out is required");
  if (fs::exists(out_) && !fs::is_directory(out_)) {
    throw std::runtime_error("output path " + out + " exists and is not a directory");
  }
  staging_ = out_;
  staging_ += ".partial";
  fs::remove_all(staging_);
  fs::create_directories(staging_);
}

StagingDir::~StagingDir() {
  if (!committed_) {
    std::error_code ec;
    fs::remove_all(staging_, ec);
  }
}

void StagingDir::commit() {
  fs::create_directories(out_);
  for (const auto& entry : fs::directory_iterator(staging_)) {
    fs::rename(entry.path(), out_ / entry.path().filename());
  }
  fs::remove_all(staging_);
  committed_ = true;
}

}  // namespace anogan::cli
