#include "hugsim/scene/semantics.hpp"

#include "hugsim/core/error.hpp"

namespace hugsim::scene {

SemanticSchema::SemanticSchema(std::vector<SemanticClass> classes)
    : classes_(std::move(classes)) {
  int sky = 0;
  int ground = 0;
  for (const auto& c : classes_) {
    sky += c.is_sky ? 1 : 0;
    ground += c.is_ground ? 1 : 0;
  }
  require(sky == 1, ErrorCode::kInvariantViolation,
          "semantic schema needs exactly one sky class, found " + std::to_string(sky));
  require(ground >= 1, ErrorCode::kInvariantViolation,
          "semantic schema needs at least one ground class");
}

SemanticSchema SemanticSchema::driving_default() {
  return SemanticSchema({
      {"road", true, false, false},
      {"road_marking", true, false, false},
      {"sidewalk", true, false, false},
      {"building", false, false, true},
      {"vegetation", false, false, true},
      {"vehicle", false, false, true},
      {"sky", false, true, false},
  });
}

int SemanticSchema::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    if (classes_[i].name == name) return static_cast<int>(i);
  }
  fail(ErrorCode::kInvalidArgument, "unknown semantic class '" + name + "'");
}

nlohmann::json SemanticSchema::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& c : classes_) {
    out.push_back({{"name", c.name},
                   {"is_ground", c.is_ground},
                   {"is_sky", c.is_sky},
                   {"is_collidable", c.is_collidable}});
  }
  return out;
}

SemanticSchema SemanticSchema::from_json(const nlohmann::json& j) {
  require(j.is_array(), ErrorCode::kConfig, "semantic schema must be an array");
  std::vector<SemanticClass> classes;
  for (const auto& c : j) {
    classes.push_back({c.at("name").get<std::string>(), c.value("is_ground", false),
                       c.value("is_sky", false), c.value("is_collidable", false)});
  }
  return SemanticSchema(std::move(classes));
}

bool SemanticSchema::operator==(const SemanticSchema& o) const {
  if (classes_.size() != o.classes_.size()) return false;
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    const auto& a = classes_[i];
    const auto& b = o.classes_[i];
    if (a.name != b.name || a.is_ground != b.is_ground || a.is_sky != b.is_sky ||
        a.is_collidable != b.is_collidable) {
      return false;
    }
  }
  return true;
}

}  // namespace hugsim::scene
