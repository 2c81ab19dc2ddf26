#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "hugsim/scene/scene_graph.hpp"

namespace hugsim::assets {

struct AssetEntry {
  std::string file;  // relative to the library directory
  scene::Extents extents;
  std::vector<std::string> tags;
};

/// Directory of asset containers plus `index.json` mapping asset id to
/// {file, extents [l, w, h], tags}. Loaded assets are cached; lookups are
/// safe from multiple threads.
class AssetLibrary {
 public:
  /// Opens an existing library, or an empty one when the directory has no
  /// index yet. Throws kConfig on a malformed index.
  explicit AssetLibrary(std::filesystem::path directory);

  /// Writes `<id>.hsa` and updates the index on disk. Replaces an existing
  /// entry with the same id.
  void add(const scene::VehicleAsset& asset, const std::vector<std::string>& tags = {});

  bool contains(const std::string& id) const;
  std::vector<std::string> ids() const;
  const AssetEntry& entry(const std::string& id) const;

  /// Throws kMissingAsset for unknown ids or missing files.
  std::shared_ptr<const scene::VehicleAsset> get(const std::string& id) const;

  /// Lookup callback for compose_scene; returns nullptr for unknown ids.
  scene::AssetLookup lookup() const;

  const std::filesystem::path& directory() const { return dir_; }

  static nlohmann::json index_json(const std::map<std::string, AssetEntry>& entries);

 private:
  void write_index() const;

  std::filesystem::path dir_;
  std::map<std::string, AssetEntry> entries_;
  mutable std::mutex mutex_;
  mutable std::map<std::string, std::shared_ptr<const scene::VehicleAsset>> cache_;
};

}  // namespace hugsim::assets
