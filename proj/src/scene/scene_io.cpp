#include "hugsim/scene/scene_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "hugsim/core/error.hpp"

namespace hugsim::scene {

namespace {

static_assert(std::endian::native == std::endian::little,
              "container encoding assumes a little-endian host");

constexpr std::size_t kMagicSize = sizeof(kContainerMagic);

std::size_t record_floats(int sh_degree, std::size_t classes) {
  return 3 + 4 + 3 + 1 + 3 * static_cast<std::size_t>(sh_coeff_count(sh_degree)) + classes;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::vector<std::uint8_t>& out, double v) {
  const float f = static_cast<float>(v);
  std::uint8_t b[4];
  std::memcpy(b, &f, 4);
  out.insert(out.end(), b, b + 4);
}

double get_f32(const std::uint8_t* p) {
  float f;
  std::memcpy(&f, p, 4);
  return static_cast<double>(f);
}

}  // namespace

const GaussianSet& ContainerContents::partition(const std::string& name) const {
  for (const auto& p : partitions) {
    if (p.name == name) return p.gaussians;
  }
  fail(ErrorCode::kBadContainer, "container has no partition '" + name + "'");
}

std::vector<std::uint8_t> encode_container(nlohmann::json header, int sh_degree,
                                           std::size_t semantic_classes,
                                           const std::vector<const NamedSet*>& partitions) {
  const std::size_t coeffs = 3 * static_cast<std::size_t>(sh_coeff_count(sh_degree));
  header["format"] = "hugsim-container";
  header["version"] = kContainerVersion;
  header["sh_degree"] = sh_degree;
  header["semantic_classes"] = semantic_classes;
  header["record_floats"] = record_floats(sh_degree, semantic_classes);
  nlohmann::json parts = nlohmann::json::array();
  std::size_t offset = 0;
  for (const NamedSet* p : partitions) {
    parts.push_back({{"name", p->name}, {"offset", offset}, {"count", p->gaussians.size()}});
    offset += p->gaussians.size();
  }
  header["partitions"] = parts;
  header["total"] = offset;
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(kContainerMagic, kContainerMagic + kMagicSize);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + offset * record_floats(sh_degree, semantic_classes) * 4);
  for (const NamedSet* p : partitions) {
    for (std::size_t i = 0; i < p->gaussians.size(); ++i) {
      const Gaussian& g = p->gaussians[i];
      require(g.sh.size() == coeffs && g.sem_logits.size() == semantic_classes,
              ErrorCode::kInvariantViolation,
              "cannot encode " + p->name + " Gaussian " + std::to_string(i) +
                  ": field sizes do not match the container layout");
      for (int k = 0; k < 3; ++k) put_f32(out, g.mu[k]);
      for (int k = 0; k < 4; ++k) put_f32(out, g.quat[k]);
      for (int k = 0; k < 3; ++k) put_f32(out, g.scale[k]);
      put_f32(out, g.opacity);
      for (double v : g.sh) put_f32(out, v);
      for (double v : g.sem_logits) put_f32(out, v);
    }
  }
  return out;
}

ContainerContents decode_container(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kMagicSize || std::memcmp(bytes.data(), kContainerMagic, kMagicSize) != 0) {
    fail(ErrorCode::kBadContainer, "bad container: magic bytes do not match HSIMSCN1");
  }
  if (bytes.size() < kMagicSize + 4) fail(ErrorCode::kTruncated, "truncated container: no header length");
  std::uint32_t header_len = 0;
  for (int i = 0; i < 4; ++i) header_len |= static_cast<std::uint32_t>(bytes[kMagicSize + i]) << (8 * i);
  const std::size_t header_begin = kMagicSize + 4;
  if (bytes.size() < header_begin + header_len) {
    fail(ErrorCode::kTruncated, "truncated container: header declares " + std::to_string(header_len) +
                                    " bytes, " + std::to_string(bytes.size() - header_begin) +
                                    " available");
  }
  ContainerContents out;
  try {
    out.header = nlohmann::json::parse(bytes.begin() + header_begin,
                                       bytes.begin() + header_begin + header_len);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kBadContainer, std::string("bad container: header is not JSON: ") + e.what());
  }
  const auto& h = out.header;
  if (!h.is_object() || h.value("format", "") != "hugsim-container") {
    fail(ErrorCode::kBadContainer, "bad container: unexpected header format");
  }
  const int version = h.value("version", -1);
  if (version != kContainerVersion) {
    fail(ErrorCode::kVersionMismatch, "container version " + std::to_string(version) +
                                          " is not supported (expected " +
                                          std::to_string(kContainerVersion) + ")");
  }
  int sh_degree = 0;
  std::size_t classes = 0;
  std::size_t total = 0;
  try {
    sh_degree = h.at("sh_degree").get<int>();
    classes = h.at("semantic_classes").get<std::size_t>();
    total = h.at("total").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kBadContainer, std::string("bad container: ") + e.what());
  }
  if (sh_degree < 0 || sh_degree > 3) fail(ErrorCode::kBadContainer, "bad container: sh degree");
  const std::size_t nf = record_floats(sh_degree, classes);
  if (h.value("record_floats", std::size_t{0}) != nf) {
    fail(ErrorCode::kBadContainer, "bad container: record layout mismatch");
  }
  const std::size_t payload = bytes.size() - header_begin - header_len;
  if (payload < total * nf * 4) {
    fail(ErrorCode::kTruncated, "truncated container: expected " + std::to_string(total * nf * 4) +
                                    " record bytes, found " + std::to_string(payload));
  }
  if (payload > total * nf * 4) fail(ErrorCode::kBadContainer, "bad container: trailing bytes");

  const std::uint8_t* p = bytes.data() + header_begin + header_len;
  const int coeffs = 3 * sh_coeff_count(sh_degree);
  std::size_t consumed = 0;
  for (const auto& part : h.at("partitions")) {
    NamedSet set;
    set.name = part.at("name").get<std::string>();
    const std::size_t count = part.at("count").get<std::size_t>();
    if (part.at("offset").get<std::size_t>() != consumed || consumed + count > total) {
      fail(ErrorCode::kBadContainer, "bad container: partition offsets are inconsistent");
    }
    set.gaussians.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      Gaussian& g = set.gaussians[i];
      for (int k = 0; k < 3; ++k, p += 4) g.mu[k] = get_f32(p);
      for (int k = 0; k < 4; ++k, p += 4) g.quat[k] = get_f32(p);
      for (int k = 0; k < 3; ++k, p += 4) g.scale[k] = get_f32(p);
      g.opacity = get_f32(p);
      p += 4;
      g.sh.resize(static_cast<std::size_t>(coeffs));
      for (double& v : g.sh) { v = get_f32(p); p += 4; }
      g.sem_logits.resize(classes);
      for (double& v : g.sem_logits) { v = get_f32(p); p += 4; }
      const std::string why = validate(g, classes);
      if (!why.empty()) {
        fail(ErrorCode::kInvariantViolation, "invariant violation in partition '" + set.name +
                                                 "' at Gaussian index " + std::to_string(i) + ": " + why);
      }
    }
    consumed += count;
    out.partitions.push_back(std::move(set));
  }
  if (consumed != total) fail(ErrorCode::kBadContainer, "bad container: partition counts do not sum to total");
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIo, "write failed for '" + path.string() + "'");
}

std::vector<std::uint8_t> encode_scene(const SceneGraph& graph) {
  nlohmann::json header;
  header["kind"] = "scene";
  header["schema"] = graph.schema.to_json();
  header["ground_planes"] = graph.ground_planes.to_json();
  nlohmann::json natives = nlohmann::json::array();
  for (const auto& a : graph.native_actors) {
    natives.push_back({{"extents", {a.extents.length, a.extents.width, a.extents.height}},
                       {"trajectory", a.trajectory.to_json()}});
  }
  header["native_actors"] = natives;
  nlohmann::json inserted = nlohmann::json::array();
  for (const auto& a : graph.inserted_actors) {
    inserted.push_back({{"asset_id", a.asset_id},
                        {"pose", {a.pose.x, a.pose.z, a.pose.theta}},
                        {"behavior", a.behavior}});
  }
  header["inserted_actors"] = inserted;

  std::vector<NamedSet> owned;
  owned.push_back({"ground", graph.ground});
  owned.push_back({"static", graph.static_bg});
  for (std::size_t a = 0; a < graph.native_actors.size(); ++a) {
    owned.push_back({"native/" + std::to_string(a), graph.native_actors[a].gaussians});
  }
  std::vector<const NamedSet*> parts;
  for (const auto& s : owned) parts.push_back(&s);
  return encode_container(header, graph.sh_degree, graph.schema.size(), parts);
}

SceneGraph decode_scene(const std::vector<std::uint8_t>& bytes) {
  ContainerContents c = decode_container(bytes);
  if (c.header.value("kind", "") != "scene") fail(ErrorCode::kBadContainer, "container is not a scene");
  SceneGraph g;
  try {
    g.schema = SemanticSchema::from_json(c.header.at("schema"));
    g.sh_degree = c.header.at("sh_degree").get<int>();
    g.ground = c.partition("ground");
    g.static_bg = c.partition("static");
    g.ground_planes = GroundPlaneSet::from_json(c.header.at("ground_planes"));
    const auto& natives = c.header.at("native_actors");
    for (std::size_t a = 0; a < natives.size(); ++a) {
      NativeActor actor;
      const auto& e = natives[a].at("extents");
      actor.extents = {e.at(0).get<double>(), e.at(1).get<double>(), e.at(2).get<double>()};
      actor.trajectory = recon::UnicycleTrajectory::from_json(natives[a].at("trajectory"));
      actor.gaussians = c.partition("native/" + std::to_string(a));
      g.native_actors.push_back(std::move(actor));
    }
    for (const auto& ia : c.header.at("inserted_actors")) {
      InsertedActor actor;
      actor.asset_id = ia.at("asset_id").get<std::string>();
      actor.pose = {ia.at("pose").at(0).get<double>(), ia.at("pose").at(1).get<double>(),
                    ia.at("pose").at(2).get<double>()};
      actor.behavior = ia.value("behavior", nlohmann::json::object());
      g.inserted_actors.push_back(std::move(actor));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kBadContainer, std::string("bad scene header: ") + e.what());
  }
  g.validate();
  return g;
}

void save_scene(const SceneGraph& graph, const std::filesystem::path& path) {
  write_file_bytes(path, encode_scene(graph));
}

SceneGraph load_scene(const std::filesystem::path& path) { return decode_scene(read_file_bytes(path)); }

void save_asset(const VehicleAsset& asset, const std::filesystem::path& path) {
  const std::size_t classes =
      !asset.body.empty() ? asset.body.front().sem_logits.size() : 0;
  const int degree = !asset.body.empty() ? asset.body.front().sh_degree() : 0;
  nlohmann::json header;
  header["kind"] = "asset";
  header["asset_id"] = asset.id;
  header["extents"] = {asset.extents.length, asset.extents.width, asset.extents.height};
  header["provenance"] = asset.provenance;
  NamedSet body{"body", asset.body};
  NamedSet shadow{"shadow", asset.shadow};
  write_file_bytes(path, encode_container(header, degree, classes, {&body, &shadow}));
}

VehicleAsset load_asset(const std::filesystem::path& path) {
  ContainerContents c = decode_container(read_file_bytes(path));
  if (c.header.value("kind", "") != "asset") fail(ErrorCode::kBadContainer, "container is not an asset");
  VehicleAsset a;
  try {
    a.id = c.header.at("asset_id").get<std::string>();
    const auto& e = c.header.at("extents");
    a.extents = {e.at(0).get<double>(), e.at(1).get<double>(), e.at(2).get<double>()};
    a.provenance = c.header.value("provenance", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kBadContainer, std::string("bad asset header: ") + e.what());
  }
  a.body = c.partition("body");
  a.shadow = c.partition("shadow");
  return a;
}

}  // namespace hugsim::scene
