#include "hugsim/assets/library.hpp"

#include <cctype>
#include <fstream>

#include "hugsim/core/error.hpp"
#include "hugsim/scene/scene_io.hpp"

namespace hugsim::assets {

namespace {

constexpr char kIndexName[] = "index.json";

bool valid_id(const std::string& id) {
  if (id.empty() || id == "." || id == "..") return false;
  for (char c : id) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
  }
  return true;
}

}  // namespace

AssetLibrary::AssetLibrary(std::filesystem::path directory) : dir_(std::move(directory)) {
  const auto index = dir_ / kIndexName;
  if (!std::filesystem::exists(index)) return;
  std::ifstream in(index);
  require(static_cast<bool>(in), ErrorCode::kIo, "asset library: cannot read " + index.string());
  try {
    const auto j = nlohmann::json::parse(in);
    for (const auto& [id, e] : j.at("assets").items()) {
      AssetEntry entry;
      entry.file = e.at("file").get<std::string>();
      const auto& x = e.at("extents");
      entry.extents = {x.at(0).get<double>(), x.at(1).get<double>(), x.at(2).get<double>()};
      entry.tags = e.value("tags", std::vector<std::string>{});
      entries_.emplace(id, std::move(entry));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, "asset library: malformed " + index.string() + ": " + e.what());
  }
}

nlohmann::json AssetLibrary::index_json(const std::map<std::string, AssetEntry>& entries) {
  nlohmann::json assets = nlohmann::json::object();
  for (const auto& [id, e] : entries) {
    assets[id] = {{"file", e.file},
                  {"extents", {e.extents.length, e.extents.width, e.extents.height}},
                  {"tags", e.tags}};
  }
  return {{"format", "hugsim-asset-index"}, {"version", 1}, {"assets", assets}};
}

void AssetLibrary::write_index() const {
  std::filesystem::create_directories(dir_);
  const auto tmp = dir_ / (std::string(kIndexName) + ".tmp");
  {
    std::ofstream out(tmp);
    require(static_cast<bool>(out), ErrorCode::kIo, "asset library: cannot write " + tmp.string());
    out << index_json(entries_).dump(2) << '\n';
  }
  std::filesystem::rename(tmp, dir_ / kIndexName);
}

void AssetLibrary::add(const scene::VehicleAsset& asset, const std::vector<std::string>& tags) {
  require(valid_id(asset.id), ErrorCode::kInvalidArgument,
          "asset library: invalid asset id '" + asset.id + "' (use letters, digits, '_', '-', '.')");
  std::lock_guard lock(mutex_);
  std::filesystem::create_directories(dir_);
  const std::string file = asset.id + ".hsa";
  scene::save_asset(asset, dir_ / file);
  entries_[asset.id] = {file, asset.extents, tags};
  cache_.erase(asset.id);
  write_index();
}

bool AssetLibrary::contains(const std::string& id) const { return entries_.count(id) > 0; }

std::vector<std::string> AssetLibrary::ids() const {
  std::vector<std::string> out;
  for (const auto& kv : entries_) out.push_back(kv.first);
  return out;
}

const AssetEntry& AssetLibrary::entry(const std::string& id) const {
  const auto it = entries_.find(id);
  if (it == entries_.end()) fail(ErrorCode::kMissingAsset, "asset library: unknown asset '" + id + "'");
  return it->second;
}

std::shared_ptr<const scene::VehicleAsset> AssetLibrary::get(const std::string& id) const {
  const AssetEntry& e = entry(id);
  std::lock_guard lock(mutex_);
  if (auto it = cache_.find(id); it != cache_.end()) return it->second;
  const auto path = dir_ / e.file;
  if (!std::filesystem::exists(path)) {
    fail(ErrorCode::kMissingAsset, "asset library: file " + path.string() + " for asset '" + id + "' is missing");
  }
  auto asset = std::make_shared<scene::VehicleAsset>(scene::load_asset(path));
  asset->id = id;
  cache_[id] = asset;
  return asset;
}

scene::AssetLookup AssetLibrary::lookup() const {
  return [this](const std::string& id) -> const scene::VehicleAsset* {
    if (!contains(id)) return nullptr;
    return get(id).get();
  };
}

}  // namespace hugsim::assets
