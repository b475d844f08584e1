#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <torch/types.h>

namespace faceedit {

// Raw CelebA aligned-and-cropped frame size, and the square we keep from it.
inline constexpr std::int64_t kCelebaWidth = 178;
inline constexpr std::int64_t kCelebaHeight = 218;
inline constexpr std::int64_t kCelebaCrop = 170;
inline constexpr std::int64_t kCelebaCropLeft = (kCelebaWidth - kCelebaCrop) / 2;  // 4
inline constexpr std::int64_t kCelebaCropTop = (kCelebaHeight - kCelebaCrop) / 2;  // 24

// `raw` is H x W x 3 with intensities in [0, 255] (uint8 or floating). Takes
// the size x size window at (top, left), resizes it bilinearly (half-pixel
// centres) to resolution x resolution and maps to [-1, 1]. Result 1 x 3 x R x R.
torch::Tensor crop_resize(const torch::Tensor& raw, std::int64_t top, std::int64_t left, std::int64_t size,
                          std::int64_t resolution);

// CelebA path: 178x218 input, centre 170x170 crop, resize to `resolution`.
torch::Tensor preprocess_image(const torch::Tensor& raw, std::int64_t resolution = 128);

// Arbitrary-size input: largest centred square, resize to `resolution`.
// CelebA-sized frames go through preprocess_image instead.
torch::Tensor preprocess_any(const torch::Tensor& raw, std::int64_t resolution);

// Decoding / encoding. Raw images are H x W x 3 uint8 RGB tensors.
torch::Tensor read_image(const std::filesystem::path& path);
torch::Tensor decode_image(std::string_view bytes);

// `image` is 3 x H x W (or 1 x 3 x H x W) in [-1, 1].
torch::Tensor to_rgb8(const torch::Tensor& image);
void write_png(const std::filesystem::path& path, const torch::Tensor& image);
std::string encode_png(const torch::Tensor& image);
// Single-channel map in [0, 1] as an 8-bit grayscale PNG.
std::string encode_gray_png(const torch::Tensor& map);
void write_rgb8_png(const std::filesystem::path& path, const torch::Tensor& rgb8);
std::string encode_rgb8_png(const torch::Tensor& rgb8);

}  // namespace faceedit
