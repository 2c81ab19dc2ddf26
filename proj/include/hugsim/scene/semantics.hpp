#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace hugsim::scene {

struct SemanticClass {
  std::string name;
  bool is_ground = false;
  bool is_sky = false;
  bool is_collidable = false;
};

/// Scene-owned class list. Exactly one sky class, at least one ground class.
class SemanticSchema {
 public:
  SemanticSchema() = default;
  explicit SemanticSchema(std::vector<SemanticClass> classes);

  /// road, road_marking, sidewalk, building, vegetation, vehicle, sky
  static SemanticSchema driving_default();

  std::size_t size() const { return classes_.size(); }
  const SemanticClass& operator[](std::size_t i) const { return classes_.at(i); }
  const std::vector<SemanticClass>& classes() const { return classes_; }

  /// Index of a class by name; throws kInvalidArgument when absent.
  int index_of(const std::string& name) const;

  nlohmann::json to_json() const;
  static SemanticSchema from_json(const nlohmann::json& j);

  bool operator==(const SemanticSchema& o) const;

 private:
  std::vector<SemanticClass> classes_;
};

}  // namespace hugsim::scene
