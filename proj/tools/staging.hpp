#pragma once

#include <filesystem>
#include <string>

namespace anogan::cli {

// Outputs are written into "<out>.partial" and moved into `out` only when the
// command succeeds, so a failed run leaves nothing behind.
class StagingDir {
 public:
  explicit StagingDir(const std::string& out);
  ~StagingDir();
  StagingDir(const StagingDir&) = delete;
  StagingDir& operator=(const StagingDir&) = delete;

  const std::filesystem::path& path() const { return staging_; }
  std::string file(const std::string& name) const { return (staging_ / name).string(); }
  void commit();

 private:
  std::filesystem::path out_;
  std::filesystem::path staging_;
  bool committed_ = false;
};

}  // namespace anogan::cli
