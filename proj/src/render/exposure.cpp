#include "hugsim/render/exposure.hpp"

#include <Eigen/Dense>

#include "hugsim/core/error.hpp"

namespace hugsim::render {

nlohmann::json ExposureAffine::to_json() const {
  nlohmann::json a = nlohmann::json::array();
  for (int r = 0; r < 3; ++r) a.push_back({A(r, 0), A(r, 1), A(r, 2)});
  return {{"A", a}, {"b", {b[0], b[1], b[2]}}};
}

ExposureAffine ExposureAffine::from_json(const nlohmann::json& j) {
  ExposureAffine e;
  try {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) e.A(r, c) = j.at("A").at(r).at(c).get<double>();
      e.b[r] = j.at("b").at(r).get<double>();
    }
  } catch (const nlohmann::json::exception& ex) {
    fail(ErrorCode::kConfig, std::string("exposure: ") + ex.what());
  }
  require(e.is_finite(), ErrorCode::kNonFinite, "exposure has non-finite entries");
  return e;
}

Image apply_exposure(const Image& color, const ExposureAffine& aff) {
  require(color.channels == 3, ErrorCode::kShapeMismatch, "exposure needs a 3-channel image");
  Image out = color;
  for (std::size_t p = 0; p < color.pixel_count(); ++p) {
    const Vec3 c(color.data[3 * p], color.data[3 * p + 1], color.data[3 * p + 2]);
    const Vec3 r = aff.A * c + aff.b;
    for (int k = 0; k < 3; ++k) out.data[3 * p + k] = r[k];
  }
  return out;
}

ExposureGrad apply_exposure_backward(const Image& color, const ExposureAffine& aff, const Image& grad_out) {
  require(color.same_shape(grad_out) && color.channels == 3, ErrorCode::kShapeMismatch,
          "exposure gradient shape mismatch");
  ExposureGrad g;
  g.color = Image(color.width, color.height, 3);
  const Mat3 At = aff.A.transpose();
  for (std::size_t p = 0; p < color.pixel_count(); ++p) {
    const Vec3 c(color.data[3 * p], color.data[3 * p + 1], color.data[3 * p + 2]);
    const Vec3 go(grad_out.data[3 * p], grad_out.data[3 * p + 1], grad_out.data[3 * p + 2]);
    g.A += go * c.transpose();
    g.b += go;
    const Vec3 gc = At * go;
    for (int k = 0; k < 3; ++k) g.color.data[3 * p + k] = gc[k];
  }
  return g;
}

ExposureAffine fit_exposure(const Image& source, const Image& target, const Image* mask) {
  require(source.same_shape(target) && source.channels == 3, ErrorCode::kShapeMismatch,
          "exposure fit needs two 3-channel images of equal size");
  Eigen::Matrix4d ata = Eigen::Matrix4d::Zero();
  Eigen::Matrix<double, 4, 3> atb = Eigen::Matrix<double, 4, 3>::Zero();
  for (std::size_t p = 0; p < source.pixel_count(); ++p) {
    if (mask && mask->data[p] <= 0.5) continue;
    const Eigen::Vector4d x(source.data[3 * p], source.data[3 * p + 1], source.data[3 * p + 2], 1.0);
    const Vec3 y(target.data[3 * p], target.data[3 * p + 1], target.data[3 * p + 2]);
    ata += x * x.transpose();
    atb += x * y.transpose();
  }
  const Eigen::Matrix<double, 4, 3> sol = ata.ldlt().solve(atb);
  ExposureAffine e;
  e.A = sol.topRows<3>().transpose();
  e.b = sol.row(3).transpose();
  require(e.is_finite(), ErrorCode::kNonFinite, "exposure fit is degenerate");
  return e;
}

}  // namespace hugsim::render
