#include "faceedit/heatmap.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>
#include <torch/torch.h>

#include "faceedit/errors.hpp"
#include "faceedit/image.hpp"

namespace faceedit {

namespace fs = std::filesystem;
namespace F = torch::nn::functional;

std::string to_string(Branch b) { return b == Branch::kAF ? "AF" : "CAFE"; }

torch::Tensor normalize_map(const torch::Tensor& map) {
  auto m = map.to(torch::kFloat64);
  const auto lo = m.min(), hi = m.max();
  const auto range = (hi - lo).item<double>();
  if (!(range > 0)) return torch::zeros_like(map, map.options().dtype(torch::kFloat32));
  return ((m - lo) / range).to(torch::kFloat32);
}

const HeatmapOverlay& AttentionRendering::find(const std::string& attribute, Branch branch) const {
  for (const auto& o : overlays)
    if (o.attribute == attribute && o.branch == branch) return o;
  throw LookupError("no " + to_string(branch) + " overlay for attribute '" + attribute + "'");
}

RawAttention raw_attention(Discriminator& discriminator, const torch::Tensor& x) {
  torch::NoGradGuard no_grad;
  discriminator->eval();
  auto f = discriminator->extract_features(x.dim() == 3 ? x.unsqueeze(0) : x);
  RawAttention out{discriminator->attention_branch(f).features, std::nullopt};
  if (discriminator->has_complementary()) out.cafe = discriminator->complementary_attention_branch(f).features;
  return out;
}

torch::Tensor upsample_normalized(const torch::Tensor& maps, std::int64_t resolution) {
  if (maps.dim() != 4) throw ShapeError("maps must be B x k x h x w");
  auto flat = maps.flatten(0, 1);
  std::vector<torch::Tensor> normalized;
  normalized.reserve(static_cast<std::size_t>(flat.size(0)));
  for (std::int64_t i = 0; i < flat.size(0); ++i) normalized.push_back(normalize_map(flat[i]));
  auto stacked = torch::stack(normalized).unsqueeze(1);
  auto up = F::interpolate(stacked, F::InterpolateFuncOptions()
                                        .size(std::vector<std::int64_t>{resolution, resolution})
                                        .mode(torch::kBilinear)
                                        .align_corners(false));
  return up.squeeze(1).view({maps.size(0), maps.size(1), resolution, resolution}).clamp(0, 1);
}

AttentionRendering render_attention_maps(Discriminator& discriminator, const torch::Tensor& x,
                                         const AttributeNames& names) {
  auto image = x.dim() == 4 ? x : x.unsqueeze(0);
  if (image.size(0) != 1) throw ShapeError("render one image at a time");
  const auto k = static_cast<std::int64_t>(names.size());
  if (k != discriminator->config().attributes)
    throw ConfigError("attribute list has " + std::to_string(k) + " names but the checkpoint has " +
                      std::to_string(discriminator->config().attributes));
  const auto res = image.size(-1);
  auto raw = raw_attention(discriminator, image);
  auto af = upsample_normalized(raw.af, res)[0];
  std::optional<torch::Tensor> cafe;
  if (raw.cafe) cafe = upsample_normalized(*raw.cafe, res)[0];

  AttentionRendering out;
  out.image = image[0];
  for (std::int64_t i = 0; i < k; ++i) {
    const auto& name = names[static_cast<std::size_t>(i)];
    out.overlays.push_back({name, Branch::kAF, af[i]});
    out.overlays.push_back({name, Branch::kCAFE, cafe ? std::optional<torch::Tensor>((*cafe)[i]) : std::nullopt});
  }
  return out;
}

torch::Tensor colorize_overlay(const torch::Tensor& image, const torch::Tensor& map, double alpha) {
  auto rgb = to_rgb8(image).contiguous();
  const auto h = rgb.size(0), w = rgb.size(1);
  if (map.dim() != 2 || map.size(0) != h || map.size(1) != w) throw ShapeError("map and image sizes differ");
  auto gray = (map.clamp(0, 1) * 255).round().to(torch::kUInt8).contiguous();
  cv::Mat g(static_cast<int>(h), static_cast<int>(w), CV_8UC1, gray.data_ptr<std::uint8_t>());
  cv::Mat jet_bgr, jet;
  cv::applyColorMap(g, jet_bgr, cv::COLORMAP_JET);
  cv::cvtColor(jet_bgr, jet, cv::COLOR_BGR2RGB);
  cv::Mat base(static_cast<int>(h), static_cast<int>(w), CV_8UC3, rgb.data_ptr<std::uint8_t>());
  cv::Mat blended;
  cv::addWeighted(jet, alpha, base, 1.0 - alpha, 0.0, blended);
  return torch::from_blob(blended.data, {h, w, 3}, torch::kUInt8).clone();
}

std::vector<fs::path> write_overlays(const AttentionRendering& rendering, const fs::path& dir,
                                     const std::string& stem) {
  fs::create_directories(dir);
  std::vector<fs::path> written;
  for (const auto& o : rendering.overlays) {
    if (!o.map) continue;
    auto path = dir / (stem + "_" + o.attribute + "_" + to_string(o.branch) + ".png");
    write_rgb8_png(path, colorize_overlay(rendering.image, *o.map));
    written.push_back(std::move(path));
  }
  return written;
}

bool concentrated_in_mask(const torch::Tensor& map, const torch::Tensor& mask) {
  if (map.sizes() != mask.sizes()) throw ShapeError("map and mask sizes differ");
  auto inside = mask.to(torch::kBool);
  const auto n_in = inside.sum().item<std::int64_t>();
  const auto n_out = inside.numel() - n_in;
  if (n_in == 0 || n_out == 0) throw DomainError("mask must split the image into two nonempty regions");
  auto m = map.to(torch::kFloat64);
  const auto mean_in = m.masked_select(inside).mean().item<double>();
  const auto mean_out = m.masked_select(inside.logical_not()).mean().item<double>();
  return mean_in > mean_out;
}

}  // namespace faceedit
