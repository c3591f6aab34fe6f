#pragma once

// On-disk partition cache keyed by image content and partition config.
// The directory comes from ELEMEDIT_CACHE; without it nothing is cached.

#include <filesystem>
#include <optional>
#include <string>

#include "elemedit/partition.hpp"

namespace elemedit::cache {

/// ELEMEDIT_CACHE, if set and non-empty.
std::optional<std::filesystem::path> cache_root();

/// SHA-256 over the pixel values and the canonical config JSON.
std::string partition_key(const Image& image, const partition::PartitionConfig& config);

/// Label map of partition_image(image, config), read from or written to the cache.
partition::LabelMap cached_labels(const Image& image, const partition::PartitionConfig& config);

/// Same, with an explicit cache directory (nullopt disables caching).
partition::LabelMap cached_labels(const Image& image, const partition::PartitionConfig& config,
                                  const std::optional<std::filesystem::path>& root);

}  // namespace elemedit::cache
