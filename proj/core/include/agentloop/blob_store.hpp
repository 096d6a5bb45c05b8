#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace agentloop {

// Content-addressed byte store: blobs/<sha256>.png next to a trajectory
// file.  Trajectory JSON then references images by hash, which keeps lines
// small and makes replay comparisons exact.
class BlobStore {
 public:
  explicit BlobStore(std::filesystem::path root);

  // Writes the blob if absent and returns its sha256 key.
  std::string put(std::string_view bytes);
  // Throws Error(IoError) for unknown keys.
  std::string get(const std::string& key) const;
  bool contains(const std::string& key) const;

  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path path_for(const std::string& key) const;
  std::filesystem::path root_;
};

}  // namespace agentloop
