#include "blockstate/dataset.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <string>

#include "blockstate/errors.hpp"

namespace blockstate {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::uint32_t read_be_u32(std::ifstream& in, const std::string& what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw parse_error("truncated IDX file while reading " + what);
  }
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

std::ifstream open_binary(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw parse_error("cannot open file: " + p.string());
  return in;
}

}  // namespace

std::vector<Image> load_idx(const std::filesystem::path& images_path,
                            const std::filesystem::path& labels_path) {
  std::ifstream img_in = open_binary(images_path);
  const std::uint32_t img_magic = read_be_u32(img_in, "image magic");
  if (img_magic != kImagesMagic) {
    throw parse_error("bad image magic in " + images_path.string() +
                      ": expected 0x00000803");
  }
  const std::uint32_t count = read_be_u32(img_in, "image count");
  const std::uint32_t height = read_be_u32(img_in, "image height");
  const std::uint32_t width = read_be_u32(img_in, "image width");

  std::ifstream lab_in = open_binary(labels_path);
  const std::uint32_t lab_magic = read_be_u32(lab_in, "label magic");
  if (lab_magic != kLabelsMagic) {
    throw parse_error("bad label magic in " + labels_path.string() +
                      ": expected 0x00000801");
  }
  const std::uint32_t lab_count = read_be_u32(lab_in, "label count");
  if (lab_count != count) {
    throw parse_error("image/label count mismatch: " + std::to_string(count) +
                      " images vs " + std::to_string(lab_count) + " labels");
  }

  const std::size_t npix = std::size_t(height) * width;
  std::vector<unsigned char> pix_buf(npix);
  std::vector<Image> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    if (!img_in.read(reinterpret_cast<char*>(pix_buf.data()),
                     static_cast<std::streamsize>(npix))) {
      throw parse_error("truncated IDX image data at image " + std::to_string(i));
    }
    char lab = 0;
    if (!lab_in.get(lab)) {
      throw parse_error("truncated IDX label data at label " + std::to_string(i));
    }
    Image img;
    img.height = static_cast<int>(height);
    img.width = static_cast<int>(width);
    img.label = static_cast<unsigned char>(lab);
    img.pixels.resize(npix);
    for (std::size_t j = 0; j < npix; ++j) img.pixels[j] = pix_buf[j] / 255.0;
    out.push_back(std::move(img));
  }
  return out;
}

BlockLayout tile(int height, int width, int n) {
  if (n < 1 || n > 4) {
    throw config_error("unsupported block size n = " + std::to_string(n) +
                       " (supported: 1..4)");
  }
  BlockLayout layout;
  layout.n = n;
  layout.grid_height = (height / n) * n;
  layout.grid_width = (width / n) * n;
  if (layout.grid_height < n || layout.grid_width < n) {
    throw config_error("grid too small for block size " + std::to_string(n));
  }
  const int bh = layout.grid_height / n;
  const int bw = layout.grid_width / n;
  layout.blocks.reserve(std::size_t(bh) * bw);
  for (int br = 0; br < bh; ++br) {
    for (int bc = 0; bc < bw; ++bc) {
      std::vector<int> sites;
      sites.reserve(std::size_t(n) * n);
      for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
          sites.push_back((br * n + r) * layout.grid_width + (bc * n + c));
        }
      }
      layout.blocks.push_back(std::move(sites));
    }
  }
  return layout;
}

Partition make_partition(std::vector<int> region_a, int total_sites) {
  std::sort(region_a.begin(), region_a.end());
  if (region_a.empty() || static_cast<int>(region_a.size()) >= total_sites) {
    throw config_error("partition region A must be a nonempty proper subset");
  }
  Partition p;
  p.total_sites = total_sites;
  p.region_b.reserve(total_sites - region_a.size());
  std::size_t k = 0;
  for (int s = 0; s < total_sites; ++s) {
    if (k < region_a.size() && region_a[k] == s) {
      ++k;
    } else {
      p.region_b.push_back(s);
    }
  }
  if (k != region_a.size()) {
    throw config_error("partition region A has out-of-range or duplicate sites");
  }
  p.region_a = std::move(region_a);
  return p;
}

Partition top_half_partition(int height, int width) {
  if (height % 2 != 0) {
    throw config_error("top/bottom half partition requires even height, got " +
                       std::to_string(height));
  }
  std::vector<int> a(std::size_t(height / 2) * width);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = static_cast<int>(i);
  return make_partition(std::move(a), height * width);
}

std::vector<Partition> central_window_squares(int height, int width, int window, int L) {
  if (L < 1 || L > window) {
    throw config_error("square side L = " + std::to_string(L) +
                       " out of range 1.." + std::to_string(window));
  }
  if (window > height || window > width) {
    throw config_error("window does not fit in the lattice");
  }
  const int r0 = (height - window) / 2;
  const int c0 = (width - window) / 2;
  std::vector<Partition> out;
  const int span = window - L + 1;
  out.reserve(std::size_t(span) * span);
  for (int dr = 0; dr < span; ++dr) {
    for (int dc = 0; dc < span; ++dc) {
      std::vector<int> a;
      a.reserve(std::size_t(L) * L);
      for (int r = 0; r < L; ++r) {
        for (int c = 0; c < L; ++c) {
          a.push_back((r0 + dr + r) * width + (c0 + dc + c));
        }
      }
      out.push_back(make_partition(std::move(a), height * width));
    }
  }
  return out;
}

Image crop(const Image& img, int new_height, int new_width) {
  if (new_height > img.height || new_width > img.width) {
    throw config_error("crop dimensions exceed image dimensions");
  }
  if (new_height == img.height && new_width == img.width) return img;
  Image out;
  out.height = new_height;
  out.width = new_width;
  out.label = img.label;
  out.pixels.reserve(std::size_t(new_height) * new_width);
  for (int r = 0; r < new_height; ++r) {
    for (int c = 0; c < new_width; ++c) {
      out.pixels.push_back(img.pixels[std::size_t(r) * img.width + c]);
    }
  }
  return out;
}

std::vector<Image> filter_label(std::span<const Image> images, int label) {
  std::vector<Image> out;
  for (const Image& img : images) {
    if (img.label == label) out.push_back(img);
  }
  return out;
}

}  // namespace blockstate
