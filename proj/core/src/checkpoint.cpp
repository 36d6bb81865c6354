#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "blockstate/errors.hpp"
#include "blockstate/models.hpp"
#include "blockstate/util.hpp"

// Checkpoint container, format "BPSCKv1\0". All integers and doubles are
// little-endian; parameter payloads round-trip bit-exactly. See
// docs/checkpoint-format.md for the byte layout.

namespace blockstate {

namespace {

constexpr char kMagic[8] = {'B', 'P', 'S', 'C', 'K', 'v', '1', '\0'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(out, bits);
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw parse_error("checkpoint truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(std::uint8_t(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

void put_params(std::string& out, std::span<const double> params) {
  put_u64(out, params.size());
  out.reserve(out.size() + params.size() * 8);
  for (double p : params) put_f64(out, p);
}

void put_metadata(std::string& out, const std::map<std::string, std::string>& meta) {
  put_u32(out, static_cast<std::uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    put_u32(out, static_cast<std::uint32_t>(k.size()));
    out += k;
    put_u32(out, static_cast<std::uint32_t>(v.size()));
    out += v;
  }
}

std::map<std::string, std::string> read_metadata(Reader& r) {
  std::map<std::string, std::string> meta;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t klen = r.u32();
    std::string key = r.bytes(klen);
    const std::uint32_t vlen = r.u32();
    meta[std::move(key)] = r.bytes(vlen);
  }
  return meta;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     std::uint64_t seed, const std::map<std::string, std::string>& metadata) {
  std::string out;
  out.append(kMagic, 8);
  const ModelKind kind = model_kind(model);
  put_u32(out, static_cast<std::uint32_t>(kind));

  if (const auto* m = std::get_if<NNBPSModel>(&model)) {
    put_u32(out, m->layout().n);
    put_u32(out, m->chi());
    put_u32(out, m->layout().grid_height);
    put_u32(out, m->layout().grid_width);
    put_u64(out, seed);
    put_u32(out, 0);  // label_pos: n/a
    put_u32(out, 0);  // boundary_dim: n/a
    put_params(out, m->params());
  } else if (const auto* m = std::get_if<SBPSModel>(&model)) {
    put_u32(out, m->layout().n);
    put_u32(out, m->chi());
    put_u32(out, m->layout().grid_height);
    put_u32(out, m->layout().grid_width);
    put_u64(out, seed);
    put_u32(out, m->label_pos());
    put_u32(out, m->boundary_dim());
    put_params(out, m->params());
  } else {
    const auto& sum = std::get<SumStateModel>(model);
    put_u32(out, 0);
    put_u32(out, 0);
    put_u32(out, 0);
    put_u32(out, 0);
    put_u64(out, seed);
    put_u32(out, 0);
    put_u32(out, 0);
    for (int cls = 0; cls < kNumClasses; ++cls) {
      put_u32(out, static_cast<std::uint32_t>(sum.class_images(cls).size()));
    }
    for (int cls = 0; cls < kNumClasses; ++cls) {
      for (const Image& img : sum.class_images(cls)) {
        put_u32(out, img.height);
        put_u32(out, img.width);
        for (double p : img.pixels) put_f64(out, p);
      }
    }
  }
  put_metadata(out, metadata);
  atomic_write(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw parse_error("cannot open checkpoint: " + path.string());
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r{buf};
  if (r.bytes(8) != std::string(kMagic, 8)) {
    throw parse_error("bad checkpoint magic in " + path.string());
  }
  const std::uint32_t kind = r.u32();
  const std::uint32_t n = r.u32();
  const std::uint32_t chi = r.u32();
  const std::uint32_t grid_h = r.u32();
  const std::uint32_t grid_w = r.u32();
  const std::uint64_t seed = r.u64();
  const std::uint32_t label_pos = r.u32();
  const std::uint32_t boundary_dim = r.u32();

  auto read_model = [&]() -> Model {
    if (kind == static_cast<std::uint32_t>(ModelKind::nnbps) ||
        kind == static_cast<std::uint32_t>(ModelKind::sbps)) {
      const BlockLayout layout = tile(grid_h, grid_w, static_cast<int>(n));
      if (layout.grid_height != static_cast<int>(grid_h) ||
          layout.grid_width != static_cast<int>(grid_w)) {
        throw parse_error("checkpoint grid dims are not a multiple of the block size");
      }
      const std::uint64_t count = r.u64();
      if (kind == static_cast<std::uint32_t>(ModelKind::nnbps)) {
        NNBPSModel m(layout, static_cast<int>(chi));
        if (m.params().size() != count) {
          throw parse_error("checkpoint parameter count mismatch: " + std::to_string(count));
        }
        for (double& p : m.params()) p = r.f64();
        return m;
      }
      SBPSModel m(layout, static_cast<int>(chi), static_cast<int>(label_pos),
                  static_cast<int>(boundary_dim));
      if (m.params().size() != count) {
        throw parse_error("checkpoint parameter count mismatch: " + std::to_string(count));
      }
      for (double& p : m.params()) p = r.f64();
      return m;
    }
    if (kind == static_cast<std::uint32_t>(ModelKind::sum_state)) {
      std::array<std::uint32_t, kNumClasses> counts{};
      for (auto& c : counts) c = r.u32();
      std::vector<Image> images;
      for (int cls = 0; cls < kNumClasses; ++cls) {
        for (std::uint32_t i = 0; i < counts[cls]; ++i) {
          Image img;
          img.height = static_cast<int>(r.u32());
          img.width = static_cast<int>(r.u32());
          img.label = cls;
          img.pixels.resize(std::size_t(img.height) * img.width);
          for (double& p : img.pixels) p = r.f64();
          images.push_back(std::move(img));
        }
      }
      return SumStateModel(images);
    }
    throw parse_error("unknown checkpoint model kind " + std::to_string(kind));
  };

  Checkpoint out{read_model(), seed, {}};
  out.metadata = read_metadata(r);
  return out;
}

}  // namespace blockstate
