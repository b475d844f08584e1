#include "faceedit/image.hpp"

#include <vector>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <torch/torch.h>

#include "faceedit/errors.hpp"

namespace faceedit {

namespace {

void check_raw(const torch::Tensor& raw) {
  if (raw.dim() != 3 || raw.size(2) != 3)
    throw ShapeError("raw image must be H x W x 3, got " + std::to_string(raw.dim()) + "-d tensor");
}

torch::Tensor from_mat(const cv::Mat& bgr) {
  if (bgr.empty()) throw Error("image could not be decoded");
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  return torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
}

cv::Mat to_mat(const torch::Tensor& rgb8) {
  auto t = rgb8.contiguous();
  cv::Mat rgb(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), CV_8UC3, t.data_ptr<std::uint8_t>());
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

std::string encode_mat(const cv::Mat& m) {
  std::vector<unsigned char> buf;
  if (!cv::imencode(".png", m, buf)) throw Error("PNG encoding failed");
  return {buf.begin(), buf.end()};
}

}  // namespace

torch::Tensor crop_resize(const torch::Tensor& raw, std::int64_t top, std::int64_t left, std::int64_t size,
                          std::int64_t resolution) {
  check_raw(raw);
  if (top < 0 || left < 0 || top + size > raw.size(0) || left + size > raw.size(1))
    throw ShapeError("crop window exceeds image bounds");
  auto window = raw.slice(0, top, top + size).slice(1, left, left + size).to(torch::kFloat32);
  auto chw = window.permute({2, 0, 1}).unsqueeze(0).contiguous();
  torch::Tensor resized = chw;
  if (size != resolution) {
    namespace F = torch::nn::functional;
    resized = F::interpolate(chw, F::InterpolateFuncOptions()
                                      .size(std::vector<std::int64_t>{resolution, resolution})
                                      .mode(torch::kBilinear)
                                      .align_corners(false));
  }
  return (resized / 127.5 - 1.0).clamp(-1.0, 1.0);
}

torch::Tensor preprocess_image(const torch::Tensor& raw, std::int64_t resolution) {
  check_raw(raw);
  if (raw.size(0) != kCelebaHeight || raw.size(1) != kCelebaWidth)
    throw ShapeError("expected a 178x218 image, got " + std::to_string(raw.size(1)) + "x" +
                     std::to_string(raw.size(0)));
  return crop_resize(raw, kCelebaCropTop, kCelebaCropLeft, kCelebaCrop, resolution);
}

torch::Tensor preprocess_any(const torch::Tensor& raw, std::int64_t resolution) {
  check_raw(raw);
  if (raw.size(0) == kCelebaHeight && raw.size(1) == kCelebaWidth) return preprocess_image(raw, resolution);
  const auto side = std::min(raw.size(0), raw.size(1));
  return crop_resize(raw, (raw.size(0) - side) / 2, (raw.size(1) - side) / 2, side, resolution);
}

torch::Tensor read_image(const std::filesystem::path& path) {
  auto m = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (m.empty()) throw Error("cannot read image " + path.string());
  return from_mat(m);
}

torch::Tensor decode_image(std::string_view bytes) {
  std::vector<unsigned char> buf(bytes.begin(), bytes.end());
  return from_mat(cv::imdecode(buf, cv::IMREAD_COLOR));
}

torch::Tensor to_rgb8(const torch::Tensor& image) {
  auto t = image.dim() == 4 ? image.squeeze(0) : image;
  if (t.dim() != 3 || t.size(0) != 3) throw ShapeError("expected a 3 x H x W image");
  return ((t.detach().to(torch::kFloat32).clamp(-1, 1) + 1.0) * 127.5)
      .round()
      .to(torch::kUInt8)
      .permute({1, 2, 0})
      .contiguous();
}

void write_rgb8_png(const std::filesystem::path& path, const torch::Tensor& rgb8) {
  if (!cv::imwrite(path.string(), to_mat(rgb8))) throw Error("cannot write " + path.string());
}

std::string encode_rgb8_png(const torch::Tensor& rgb8) { return encode_mat(to_mat(rgb8)); }

void write_png(const std::filesystem::path& path, const torch::Tensor& image) { write_rgb8_png(path, to_rgb8(image)); }

std::string encode_png(const torch::Tensor& image) { return encode_rgb8_png(to_rgb8(image)); }

std::string encode_gray_png(const torch::Tensor& map) {
  auto t = (map.detach().to(torch::kFloat32).clamp(0, 1) * 255.0).round().to(torch::kUInt8).contiguous();
  if (t.dim() != 2) throw ShapeError("expected an H x W map");
  cv::Mat m(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), CV_8UC1, t.data_ptr<std::uint8_t>());
  return encode_mat(m);
}

}  // namespace faceedit
