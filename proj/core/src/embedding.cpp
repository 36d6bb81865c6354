#include "blockstate/embedding.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "blockstate/errors.hpp"

namespace blockstate {

namespace {

void check_range(double x, const char* what) {
  if (!(x >= 0.0 && x <= 1.0)) {
    throw input_error(std::string(what) + " out of range [0, 1]: " + std::to_string(x));
  }
}

}  // namespace

std::array<double, 2> embed_pixel(double x) {
  check_range(x, "pixel value");
  const double t = std::numbers::pi / 2.0 * x;
  return {std::cos(t), std::sin(t)};
}

ProductState embed_image(const Image& img) {
  ProductState state;
  state.site_vectors.reserve(img.pixels.size());
  for (double p : img.pixels) state.site_vectors.push_back(embed_pixel(p));
  return state;
}

double pixel_overlap(double a, double b) {
  check_range(a, "pixel value");
  check_range(b, "pixel value");
  return std::cos(std::numbers::pi / 2.0 * (a - b));
}

}  // namespace blockstate
