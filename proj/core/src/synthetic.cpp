#include "faceedit/synthetic.hpp"

#include <array>
#include <cmath>
#include <random>

#include <torch/torch.h>

#include "faceedit/errors.hpp"
#include "faceedit/image.hpp"

namespace faceedit {

namespace {

using Rgb = std::array<float, 3>;

constexpr Rgb kBackground{-0.55f, -0.45f, -0.25f};
constexpr Rgb kSkin{0.70f, 0.30f, 0.05f};
constexpr Rgb kFeature{-0.75f, -0.80f, -0.80f};
constexpr Rgb kHat{0.65f, -0.85f, -0.75f};
constexpr Rgb kChin{-0.45f, -0.65f, -0.80f};
constexpr Rgb kBar{-0.95f, -0.95f, -0.90f};

// Normalised face ellipse.
constexpr double kFaceCy = 0.55, kFaceCx = 0.5, kFaceRy = 0.36, kFaceRx = 0.30;

bool in_face(double y, double x) {
  const double dy = (y - kFaceCy) / kFaceRy, dx = (x - kFaceCx) / kFaceRx;
  return dy * dy + dx * dx <= 1.0;
}

// Pixel-centre coordinates in [0,1].
template <typename Fn>
void for_each_pixel(std::int64_t r, Fn&& fn) {
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < r; ++j) fn(i, j, (i + 0.5) / double(r), (j + 0.5) / double(r));
}

bool in_rect(double y, double x, double y0, double y1, double x0, double x1) {
  return y >= y0 && y < y1 && x >= x0 && x < x1;
}

bool in_support(SyntheticAttribute a, double y, double x) {
  switch (a) {
    case SyntheticAttribute::kHatBand:
      return in_rect(y, x, 0.03, 0.22, 0.15, 0.85);
    case SyntheticAttribute::kChinPatch:
      return in_rect(y, x, 0.80, 0.95, 0.36, 0.64);
    case SyntheticAttribute::kBrightSkin:
      return in_face(y, x);
    case SyntheticAttribute::kEyeBar:
      return in_rect(y, x, 0.40, 0.50, 0.22, 0.78);
  }
  return false;
}

void put(torch::TensorAccessor<float, 3>& img, std::int64_t i, std::int64_t j, const Rgb& c) {
  for (int ch = 0; ch < 3; ++ch) img[ch][i][j] = c[ch];
}

Rgb lerp(const Rgb& a, const Rgb& b, float t) {
  return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

}  // namespace

std::string to_string(SyntheticAttribute a) {
  switch (a) {
    case SyntheticAttribute::kHatBand:
      return "Hat_Band";
    case SyntheticAttribute::kChinPatch:
      return "Chin_Patch";
    case SyntheticAttribute::kBrightSkin:
      return "Bright_Skin";
    case SyntheticAttribute::kEyeBar:
      return "Eye_Bar";
  }
  return "?";
}

SyntheticAttribute synthetic_attribute_from_string(const std::string& name) {
  for (auto a : {SyntheticAttribute::kHatBand, SyntheticAttribute::kChinPatch, SyntheticAttribute::kBrightSkin,
                 SyntheticAttribute::kEyeBar})
    if (to_string(a) == name) return a;
  throw LookupError("unknown synthetic attribute '" + name +
                    "'; valid names: Hat_Band, Chin_Patch, Bright_Skin, Eye_Bar");
}

AttributeNames SyntheticSpec::names() const {
  AttributeNames n;
  for (auto a : attributes) n.push_back(to_string(a));
  return n;
}

void SyntheticSpec::validate() const {
  if (resolution < 8) throw ConfigError("synthetic resolution must be at least 8");
  if (count < 1) throw ConfigError("synthetic dataset needs at least one image");
  if (attributes.empty()) throw ConfigError("synthetic dataset needs k >= 1");
  if (presence < 0.0 || presence > 1.0) throw ConfigError("presence probability must lie in [0,1]");
  for (std::size_t i = 0; i < attributes.size(); ++i)
    for (std::size_t j = i + 1; j < attributes.size(); ++j)
      if (attributes[i] == attributes[j]) throw ConfigError("synthetic attributes must be distinct");
  for (auto a : attributes)
    if (!synthetic_support_mask(a, resolution).any().item<bool>())
      throw ConfigError("attribute " + to_string(a) + " has zero-area support at this resolution");
}

torch::Tensor synthetic_support_mask(SyntheticAttribute a, std::int64_t resolution) {
  auto mask = torch::zeros({resolution, resolution}, torch::kBool);
  auto m = mask.accessor<bool, 2>();
  for_each_pixel(resolution, [&](auto i, auto j, double y, double x) { m[i][j] = in_support(a, y, x); });
  return mask;
}

torch::Tensor synthetic_base_template(std::int64_t resolution) {
  auto img = torch::empty({3, resolution, resolution});
  auto a = img.accessor<float, 3>();
  for_each_pixel(resolution, [&](auto i, auto j, double y, double x) {
    put(a, i, j, in_face(y, x) ? kSkin : kBackground);
    const bool eye = in_rect(y, x, 0.42, 0.48, 0.32, 0.42) || in_rect(y, x, 0.42, 0.48, 0.58, 0.68);
    const bool mouth = in_rect(y, x, 0.70, 0.74, 0.40, 0.60);
    if (eye || mouth) put(a, i, j, kFeature);
  });
  return img;
}

torch::Tensor render_synthetic(const SyntheticSpec& spec, const std::vector<std::uint8_t>& bits,
                               const std::vector<float>& intensity) {
  if (bits.size() != spec.k() || intensity.size() != spec.k())
    throw ShapeError("label/intensity length must equal k");
  auto img = synthetic_base_template(spec.resolution);
  auto a = img.accessor<float, 3>();

  // Global edits first so local ones paint over them.
  for (std::size_t idx = 0; idx < spec.k(); ++idx) {
    if (!bits[idx] || spec.attributes[idx] != SyntheticAttribute::kBrightSkin) continue;
    const float lift = 0.25f + 0.15f * intensity[idx];
    for_each_pixel(spec.resolution, [&](auto i, auto j, double y, double x) {
      if (!in_face(y, x)) return;
      for (int ch = 0; ch < 3; ++ch) a[ch][i][j] = std::min(1.0f, a[ch][i][j] + lift);
    });
  }
  for (std::size_t idx = 0; idx < spec.k(); ++idx) {
    const auto attr = spec.attributes[idx];
    if (!bits[idx] || attr == SyntheticAttribute::kBrightSkin) continue;
    const Rgb target = attr == SyntheticAttribute::kHatBand     ? kHat
                       : attr == SyntheticAttribute::kChinPatch ? kChin
                                                                : kBar;
    const Rgb colour = lerp(lerp(target, kBackground, 0.3f), target, intensity[idx]);
    for_each_pixel(spec.resolution, [&](auto i, auto j, double y, double x) {
      if (in_support(attr, y, x)) put(a, i, j, colour);
    });
  }
  return img;
}

SyntheticDataset make_synthetic_dataset(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::bernoulli_distribution bit(spec.presence);
  std::uniform_real_distribution<float> strength(0.0f, 1.0f);

  const auto k = static_cast<std::int64_t>(spec.k());
  SyntheticDataset out;
  out.names = spec.names();
  out.images = torch::empty({spec.count, 3, spec.resolution, spec.resolution});
  out.labels = torch::empty({spec.count, k});
  for (std::int64_t n = 0; n < spec.count; ++n) {
    std::vector<std::uint8_t> bits(spec.k());
    std::vector<float> intensity(spec.k());
    for (std::size_t i = 0; i < spec.k(); ++i) {
      bits[i] = bit(rng) ? 1 : 0;
      intensity[i] = strength(rng);
      out.labels[n][static_cast<std::int64_t>(i)] = static_cast<float>(bits[i]);
    }
    out.images[n] = render_synthetic(spec, bits, intensity);
  }
  out.masks = torch::empty({k, spec.resolution, spec.resolution}, torch::kBool);
  for (std::int64_t i = 0; i < k; ++i) out.masks[i] = synthetic_support_mask(spec.attributes[i], spec.resolution);
  return out;
}

void save_synthetic_dataset(const SyntheticDataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  AttributeTable table;
  table.names = data.names;
  const auto n = data.images.size(0);
  for (std::int64_t i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%06lld.png", static_cast<long long>(i));
    write_png(dir / name, data.images[i]);
    table.filenames.emplace_back(name);
    std::vector<std::uint8_t> row;
    for (std::int64_t j = 0; j < data.labels.size(1); ++j) row.push_back(data.labels[i][j].item<float>() > 0.5f);
    table.rows.push_back(std::move(row));
  }
  table.rebuild_index();
  write_attribute_annotations(dir / "list_attr.txt", table);
}

}  // namespace faceedit
