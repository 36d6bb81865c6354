#ifndef BLOCKSTATE_DATASET_HPP
#define BLOCKSTATE_DATASET_HPP

#include <filesystem>
#include <span>
#include <vector>

namespace blockstate {

// A grayscale image with pixels normalized to [0, 1] (0 = white, 1 = black)
// and a class label in 0..9.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;  // row-major, height * width entries
  int label = 0;
};

// Reads an IDX image/label file pair (MNIST or Fashion-MNIST layout):
// big-endian u32 magic (0x00000803 images, 0x00000801 labels), big-endian
// dimension sizes, then unsigned bytes. Pixel bytes are divided by 255.
// Throws parse_error on bad magic, truncation, or image/label count mismatch.
std::vector<Image> load_idx(const std::filesystem::path& images_path,
                            const std::filesystem::path& labels_path);

// Partition of the qubit lattice into contiguous n x n blocks. Site indices
// are row-major over the cropped grid_height x grid_width lattice.
struct BlockLayout {
  int grid_height = 0;
  int grid_width = 0;
  int n = 1;
  std::vector<std::vector<int>> blocks;  // row-major block order, n*n sites each
};

// Tiles a height x width pixel grid into n x n blocks for n in {1,2,3,4}.
// Trailing rows/columns that do not fill a whole block are dropped (for
// 28x28 and n = 3 this crops to 27x27).
BlockLayout tile(int height, int width, int n);

// Bipartition of the lattice sites. region_a and region_b are disjoint,
// sorted, and together cover 0..total_sites-1.
struct Partition {
  std::vector<int> region_a;
  std::vector<int> region_b;
  int total_sites = 0;
};

Partition make_partition(std::vector<int> region_a, int total_sites);

// Top rows 0..height/2-1 as region A. Requires even height.
Partition top_half_partition(int height, int width);

// All (window - L + 1)^2 axis-aligned L x L squares inside the centered
// window x window sub-grid, each returned with the square as region A.
// For 28x28 and window 10 the window covers rows/cols 9..18.
std::vector<Partition> central_window_squares(int height, int width, int window, int L);

// Drops trailing rows/columns, e.g. to match a cropped BlockLayout.
Image crop(const Image& img, int new_height, int new_width);

// All images with the given label, in file order.
std::vector<Image> filter_label(std::span<const Image> images, int label);

}  // namespace blockstate

#endif
