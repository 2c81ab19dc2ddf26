#include "hugsim/scene/scene_graph.hpp"

#include "hugsim/core/error.hpp"

namespace hugsim::scene {

namespace {

void validate_set(const GaussianSet& set, std::size_t classes, int sh_degree,
                  const std::string& where) {
  for (std::size_t i = 0; i < set.size(); ++i) {
    std::string why = validate(set[i], classes);
    if (why.empty() && set[i].sh_degree() != sh_degree) {
      why = "sh degree " + std::to_string(set[i].sh_degree()) + " != scene degree " +
            std::to_string(sh_degree);
    }
    if (!why.empty()) {
      fail(ErrorCode::kInvariantViolation,
           where + " Gaussian " + std::to_string(i) + ": " + why);
    }
  }
}

}  // namespace

void SceneGraph::validate() const {
  require(sh_degree >= 0 && sh_degree <= 3, ErrorCode::kInvariantViolation,
          "scene sh degree must be in 0..3");
  const std::size_t classes = schema.size();
  validate_set(ground, classes, sh_degree, "ground");
  validate_set(static_bg, classes, sh_degree, "static");
  for (std::size_t a = 0; a < native_actors.size(); ++a) {
    validate_set(native_actors[a].gaussians, classes, sh_degree,
                 "native actor " + std::to_string(a));
    native_actors[a].trajectory.validate();
  }
  for (const auto& w : ground_planes.windows) {
    for (int m : w.members) {
      require(m >= 0 && static_cast<std::size_t>(m) < ground.size(),
              ErrorCode::kInvariantViolation, "ground window member index out of range");
    }
  }
}

std::size_t SceneGraph::gaussian_count() const {
  std::size_t n = ground.size() + static_bg.size();
  for (const auto& a : native_actors) n += a.gaussians.size();
  return n;
}

}  // namespace hugsim::scene
