#include "hugsim/render/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "hugsim/core/error.hpp"

namespace hugsim::render {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write '" + path.string() + "'");
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  return in;
}

// Reads a whitespace-separated header token, skipping '#' comments.
std::string token(std::istream& in) {
  std::string t;
  while (in >> t) {
    if (t[0] != '#') return t;
    std::string rest;
    std::getline(in, rest);
  }
  fail(ErrorCode::kTruncated, "image header ended early");
}

int parse_int(std::istream& in) {
  try {
    return std::stoi(token(in));
  } catch (const std::logic_error&) {
    fail(ErrorCode::kIo, "malformed image header");
  }
}

}  // namespace

std::vector<std::uint8_t> to_rgb8(const Image& color) {
  require(color.channels == 3, ErrorCode::kShapeMismatch, "RGB export needs 3 channels");
  std::vector<std::uint8_t> out(color.data.size());
  for (std::size_t i = 0; i < color.data.size(); ++i) {
    const double v = std::clamp(color.data[i], 0.0, 1.0);
    out[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return out;
}

void write_ppm(const Image& color, const std::filesystem::path& path) {
  const auto bytes = to_rgb8(color);
  auto out = open_out(path);
  out << "P6\n" << color.width << " " << color.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Image read_ppm(const std::filesystem::path& path) {
  auto in = open_in(path);
  if (token(in) != "P6") fail(ErrorCode::kIo, "'" + path.string() + "' is not a binary PPM");
  const int w = parse_int(in), h = parse_int(in), maxv = parse_int(in);
  require(w > 0 && h > 0 && maxv == 255, ErrorCode::kIo, "unsupported PPM header");
  in.get();
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) fail(ErrorCode::kTruncated, "PPM data truncated");
  Image img(w, h, 3);
  for (std::size_t i = 0; i < bytes.size(); ++i) img.data[i] = bytes[i] / 255.0;
  return img;
}

void write_pfm(const Image& img, const std::filesystem::path& path) {
  require(img.channels >= 1 && img.channels <= 3, ErrorCode::kShapeMismatch, "PFM supports 1 to 3 channels");
  const int out_c = img.channels == 1 ? 1 : 3;
  auto out = open_out(path);
  out << (out_c == 1 ? "Pf" : "PF") << "\n" << img.width << " " << img.height << "\n-1.0\n";
  std::vector<float> row(static_cast<std::size_t>(img.width) * out_c);
  for (int y = img.height - 1; y >= 0; --y) {
    std::fill(row.begin(), row.end(), 0.0f);
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) row[static_cast<std::size_t>(x) * out_c + c] = static_cast<float>(img.at(x, y, c));
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
}

Image read_pfm(const std::filesystem::path& path) {
  auto in = open_in(path);
  const std::string magic = token(in);
  int c = 0;
  if (magic == "Pf") c = 1;
  else if (magic == "PF") c = 3;
  else fail(ErrorCode::kIo, "'" + path.string() + "' is not a PFM");
  const int w = parse_int(in), h = parse_int(in);
  const double scale = std::stod(token(in));
  require(scale < 0, ErrorCode::kIo, "only little-endian PFM is supported");
  in.get();
  Image img(w, h, c);
  std::vector<float> row(static_cast<std::size_t>(w) * c);
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!in) fail(ErrorCode::kTruncated, "PFM data truncated");
    for (int x = 0; x < w; ++x) {
      for (int k = 0; k < c; ++k) img.at(x, y, k) = row[static_cast<std::size_t>(x) * c + k];
    }
  }
  return img;
}

void write_label_pgm(const Image& semantic, const std::filesystem::path& path, const Image* alpha) {
  require(semantic.channels > 0 && semantic.channels < 255, ErrorCode::kShapeMismatch,
          "label export needs 1 to 254 semantic channels");
  std::vector<std::uint8_t> labels(semantic.pixel_count());
  for (std::size_t p = 0; p < labels.size(); ++p) {
    const double* v = &semantic.data[p * semantic.channels];
    labels[p] = static_cast<std::uint8_t>(std::max_element(v, v + semantic.channels) - v);
    if (alpha && alpha->data[p] < 0.5) labels[p] = 255;
  }
  auto out = open_out(path);
  out << "P5\n" << semantic.width << " " << semantic.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

std::vector<std::uint8_t> read_pgm(const std::filesystem::path& path, int& width, int& height) {
  auto in = open_in(path);
  if (token(in) != "P5") fail(ErrorCode::kIo, "'" + path.string() + "' is not a binary PGM");
  width = parse_int(in);
  height = parse_int(in);
  parse_int(in);
  in.get();
  std::vector<std::uint8_t> v(static_cast<std::size_t>(width) * height);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size()));
  if (in.gcount() != static_cast<std::streamsize>(v.size())) fail(ErrorCode::kTruncated, "PGM data truncated");
  return v;
}

}  // namespace hugsim::render
