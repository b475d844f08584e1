#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <torch/types.h>

#include "faceedit/attributes.hpp"
#include "faceedit/discriminator.hpp"

namespace faceedit {

enum class Branch { kAF, kCAFE };

std::string to_string(Branch b);

// Min-max normalization of one map to [0,1]. A map with zero range becomes 0.
torch::Tensor normalize_map(const torch::Tensor& map);

struct HeatmapOverlay {
  std::string attribute;
  Branch branch;
  // R x R in [0,1]; empty when the checkpoint has no complementary branch.
  std::optional<torch::Tensor> map;
};

struct AttentionRendering {
  torch::Tensor image;  // 3 x R x R in [-1,1]
  // AF and CAFE per attribute in attribute order, always 2k entries.
  std::vector<HeatmapOverlay> overlays;

  const HeatmapOverlay& find(const std::string& attribute, Branch branch) const;
};

// Raw attention features for one or more images: AF and, if present, CAFE,
// each B x k x h x w.
struct RawAttention {
  torch::Tensor af;
  std::optional<torch::Tensor> cafe;
};

RawAttention raw_attention(Discriminator& discriminator, const torch::Tensor& x);

// Each map normalized, then bilinearly upsampled to `resolution`.
torch::Tensor upsample_normalized(const torch::Tensor& maps, std::int64_t resolution);

AttentionRendering render_attention_maps(Discriminator& discriminator, const torch::Tensor& x,
                                         const AttributeNames& names);

// Jet-coloured map blended onto the image, H x W x 3 uint8 RGB.
torch::Tensor colorize_overlay(const torch::Tensor& image, const torch::Tensor& map, double alpha = 0.5);

// Writes `{stem}_{attribute}_{AF|CAFE}.png` for every present overlay and
// returns the written paths.
std::vector<std::filesystem::path> write_overlays(const AttentionRendering& rendering,
                                                  const std::filesystem::path& dir, const std::string& stem);

// True when the mean of `map` inside `mask` exceeds the mean outside it.
bool concentrated_in_mask(const torch::Tensor& map, const torch::Tensor& mask);

}  // namespace faceedit
