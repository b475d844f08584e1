#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/types.h>

#include "faceedit/attributes.hpp"

namespace faceedit {

// Built-in renderers. Each paints a fixed region of a stylised face; the
// region is the attribute's support mask.
enum class SyntheticAttribute {
  kHatBand,     // coloured band across the top of the head
  kChinPatch,   // dark patch below the mouth
  kBrightSkin,  // lightens the whole face ellipse
  kEyeBar,      // dark bar across the eyes
};

std::string to_string(SyntheticAttribute a);
SyntheticAttribute synthetic_attribute_from_string(const std::string& name);

struct SyntheticSpec {
  std::int64_t resolution = 32;
  std::int64_t count = 256;
  std::vector<SyntheticAttribute> attributes{SyntheticAttribute::kHatBand, SyntheticAttribute::kChinPatch,
                                             SyntheticAttribute::kBrightSkin};
  std::uint64_t seed = 7;
  // Probability that each label bit is 1.
  double presence = 0.5;

  std::size_t k() const noexcept { return attributes.size(); }
  AttributeNames names() const;
  void validate() const;
};

struct SyntheticDataset {
  AttributeNames names;
  torch::Tensor images;  // N x 3 x R x R in [-1, 1]
  torch::Tensor labels;  // N x k float {0,1}
  torch::Tensor masks;   // k x R x R bool support masks
};

// Face with every attribute absent.
torch::Tensor synthetic_base_template(std::int64_t resolution);
torch::Tensor synthetic_support_mask(SyntheticAttribute a, std::int64_t resolution);

// Renders one image for the given label bits; `intensity[i]` in [0,1] scales
// attribute i's strength and is ignored when the bit is 0.
torch::Tensor render_synthetic(const SyntheticSpec& spec, const std::vector<std::uint8_t>& bits,
                               const std::vector<float>& intensity);

SyntheticDataset make_synthetic_dataset(const SyntheticSpec& spec);

// Writes `{index}.png` files plus a list_attr.txt in annotation format.
void save_synthetic_dataset(const SyntheticDataset& data, const std::filesystem::path& dir);

}  // namespace faceedit
