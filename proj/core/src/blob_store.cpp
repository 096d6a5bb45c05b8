#include "agentloop/blob_store.hpp"

#include "agentloop/errors.hpp"
#include "agentloop/util.hpp"

namespace agentloop {

BlobStore::BlobStore(std::filesystem::path root) : root_(std::move(root)) {
  std::filesystem::create_directories(root_);
}

std::filesystem::path BlobStore::path_for(const std::string& key) const {
  return root_ / (key + ".png");
}

std::string BlobStore::put(std::string_view bytes) {
  std::string key = sha256_hex(bytes);
  auto path = path_for(key);
  if (!std::filesystem::exists(path)) atomic_write_file(path, bytes);
  return key;
}

std::string BlobStore::get(const std::string& key) const {
  auto path = path_for(key);
  if (!std::filesystem::exists(path))
    throw Error(ErrorCode::IoError, "missing blob " + key + " under " + root_.string());
  return read_file(path);
}

bool BlobStore::contains(const std::string& key) const {
  return std::filesystem::exists(path_for(key));
}

}  // namespace agentloop
