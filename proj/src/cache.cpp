#include "elemedit/cache.hpp"

#include <cstdlib>

#include "elemedit/elements.hpp"

namespace elemedit::cache {

namespace fs = std::filesystem;

std::optional<fs::path> cache_root() {
  const char* env = std::getenv("ELEMEDIT_CACHE");
  if (env == nullptr || *env == '\0') return std::nullopt;
  return fs::path(env);
}

std::string partition_key(const Image& image, const partition::PartitionConfig& config) {
  std::string blob = std::to_string(image.height) + "x" + std::to_string(image.width) + ";";
  blob += nlohmann::json(config).dump() + ";";
  blob += encode_floats(image.data);
  return sha256_hex({reinterpret_cast<const std::uint8_t*>(blob.data()), blob.size()});
}

partition::LabelMap cached_labels(const Image& image, const partition::PartitionConfig& config) {
  return cached_labels(image, config, cache_root());
}

partition::LabelMap cached_labels(const Image& image, const partition::PartitionConfig& config,
                                  const std::optional<fs::path>& root) {
  if (!root) return partition::partition_image(image, config).partition.labels;
  const fs::path file = *root / "partitions" / (partition_key(image, config) + ".json");
  if (fs::exists(file)) {
    try {
      auto doc = nlohmann::json::parse(read_text(file));
      return partition::decode_labels_rle(doc.at("labels"), image.height, image.width);
    } catch (const std::exception&) {
      // unreadable entry: recompute and overwrite below
    }
  }
  auto labels = partition::partition_image(image, config).partition.labels;
  fs::create_directories(file.parent_path());
  const fs::path tmp = file.string() + ".tmp";
  write_text(tmp, nlohmann::json{{"labels", partition::encode_labels_rle(labels)}}.dump());
  fs::rename(tmp, file);
  return labels;
}

}  // namespace elemedit::cache
