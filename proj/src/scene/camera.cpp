#include "hugsim/scene/camera.hpp"

#include "hugsim/core/error.hpp"

namespace hugsim::scene {

std::optional<Vec2> Camera::project_camera_point(const Vec3& p, double near) const {
  if (p.z() <= near) return std::nullopt;
  return Vec2(intrinsics.fx * p.x() / p.z() + intrinsics.cx,
              intrinsics.fy * p.y() / p.z() + intrinsics.cy);
}

Camera Camera::look_along(const Intrinsics& k, int width, int height, const Vec3& position,
                          const Vec3& forward, const Vec3& down) {
  const Vec3 z_axis = forward.normalized();
  Vec3 y_axis = down - down.dot(z_axis) * z_axis;
  require(y_axis.norm() > 1e-9, ErrorCode::kInvalidArgument,
          "camera forward and down directions are parallel");
  y_axis.normalize();
  const Vec3 x_axis = y_axis.cross(z_axis);
  Camera cam;
  cam.intrinsics = k;
  cam.width = width;
  cam.height = height;
  cam.rotation.row(0) = x_axis.transpose();
  cam.rotation.row(1) = y_axis.transpose();
  cam.rotation.row(2) = z_axis.transpose();
  cam.translation = -cam.rotation * position;
  return cam;
}

nlohmann::json Camera::to_json() const {
  nlohmann::json r = nlohmann::json::array();
  for (int i = 0; i < 3; ++i) r.push_back({rotation(i, 0), rotation(i, 1), rotation(i, 2)});
  return {{"fx", intrinsics.fx}, {"fy", intrinsics.fy}, {"cx", intrinsics.cx},
          {"cy", intrinsics.cy}, {"width", width},       {"height", height},
          {"rotation", r},       {"translation", {translation.x(), translation.y(), translation.z()}}};
}

Camera Camera::from_json(const nlohmann::json& j) {
  Camera cam;
  try {
    cam.intrinsics = {j.at("fx").get<double>(), j.at("fy").get<double>(),
                      j.at("cx").get<double>(), j.at("cy").get<double>()};
    cam.width = j.at("width").get<int>();
    cam.height = j.at("height").get<int>();
    if (j.contains("rotation")) {
      for (int i = 0; i < 3; ++i)
        for (int c = 0; c < 3; ++c) cam.rotation(i, c) = j.at("rotation").at(i).at(c).get<double>();
    }
    if (j.contains("translation")) {
      for (int i = 0; i < 3; ++i) cam.translation[i] = j.at("translation").at(i).get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("camera: ") + e.what());
  }
  require(cam.intrinsics.fx > 0 && cam.intrinsics.fy > 0, ErrorCode::kConfig,
          "camera: focal lengths must be positive");
  require(cam.width > 0 && cam.height > 0, ErrorCode::kConfig, "camera: image size must be positive");
  return cam;
}

}  // namespace hugsim::scene
