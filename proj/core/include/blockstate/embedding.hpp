#ifndef BLOCKSTATE_EMBEDDING_HPP
#define BLOCKSTATE_EMBEDDING_HPP

#include <array>
#include <vector>

#include "blockstate/dataset.hpp"

namespace blockstate {

// An N-qubit product state: one unit-norm amplitude pair per site, on the
// computational basis {|0>, |1>}. Feature-map-produced amplitudes are both
// non-negative, which makes every overlap between embedded images
// non-negative as well.
struct ProductState {
  std::vector<std::array<double, 2>> site_vectors;

  std::size_t size() const { return site_vectors.size(); }
};

// Local feature map: x -> (cos(pi x / 2), sin(pi x / 2)). Throws input_error
// for x outside [0, 1].
std::array<double, 2> embed_pixel(double x);

// Applies the feature map pixel-by-pixel in row-major order.
ProductState embed_image(const Image& img);

// Closed form of the single-qubit overlap <phi(a)|phi(b)> = cos(pi (a-b) / 2).
// Always in [0, 1] for a, b in [0, 1].
double pixel_overlap(double a, double b);

}  // namespace blockstate

#endif
