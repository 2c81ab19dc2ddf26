#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "hugsim/scene/scene_graph.hpp"

namespace hugsim::scene {

inline constexpr char kContainerMagic[8] = {'H', 'S', 'I', 'M', 'S', 'C', 'N', '1'};
inline constexpr int kContainerVersion = 1;

/// Named Gaussian partition inside a container.
struct NamedSet {
  std::string name;
  GaussianSet gaussians;
};

struct ContainerContents {
  nlohmann::json header;
  std::vector<NamedSet> partitions;

  const GaussianSet& partition(const std::string& name) const;
};

/// Binary container:
///   8-byte magic "HSIMSCN1"
///   u32 little-endian JSON header length, UTF-8 JSON header
///   packed little-endian float32 Gaussian records, partitions in header order
/// Record layout: mu[3] quat[4](w,x,y,z) scale[3] opacity sh[3*(D+1)^2] sem[S].
std::vector<std::uint8_t> encode_container(nlohmann::json header, int sh_degree,
                                           std::size_t semantic_classes,
                                           const std::vector<const NamedSet*>& partitions);

/// Throws kBadContainer (magic/structure), kVersionMismatch, kTruncated, or
/// kInvariantViolation (names partition and Gaussian index).
ContainerContents decode_container(const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

void save_scene(const SceneGraph& graph, const std::filesystem::path& path);
SceneGraph load_scene(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_scene(const SceneGraph& graph);
SceneGraph decode_scene(const std::vector<std::uint8_t>& bytes);

void save_asset(const VehicleAsset& asset, const std::filesystem::path& path);
VehicleAsset load_asset(const std::filesystem::path& path);

}  // namespace hugsim::scene
