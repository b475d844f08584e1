#include "faceedit/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <torch/torch.h>

#include "faceedit/errors.hpp"
#include "faceedit/image.hpp"

namespace faceedit {

namespace fs = std::filesystem;

Batch Dataset::range(std::int64_t begin, std::int64_t end) const {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(std::max<std::int64_t>(0, end - begin)));
  std::iota(idx.begin(), idx.end(), begin);
  return batch(idx);
}

TensorDataset::TensorDataset(torch::Tensor images, torch::Tensor labels, AttributeNames names)
    : images_(std::move(images)), labels_(std::move(labels)), names_(std::move(names)) {
  if (images_.dim() != 4 || images_.size(1) != 3 || images_.size(2) != images_.size(3))
    throw ShapeError("dataset images must be N x 3 x R x R");
  if (labels_.dim() != 2 || labels_.size(0) != images_.size(0) ||
      labels_.size(1) != static_cast<std::int64_t>(names_.size()))
    throw ShapeError("dataset labels must be N x k with k matching the attribute names");
  images_ = images_.to(torch::kFloat32).contiguous();
  labels_ = labels_.to(torch::kFloat32).contiguous();
}

Batch TensorDataset::batch(std::span<const std::int64_t> indices) const {
  auto idx = torch::tensor(std::vector<std::int64_t>(indices.begin(), indices.end()), torch::kLong);
  return {images_.index_select(0, idx), labels_.index_select(0, idx)};
}

ImageFolderDataset::ImageFolderDataset(fs::path image_dir, AttributeSelection selection, std::int64_t resolution)
    : image_dir_(std::move(image_dir)), selection_(std::move(selection)), resolution_(resolution) {}

Batch ImageFolderDataset::batch(std::span<const std::int64_t> indices) const {
  const auto b = static_cast<std::int64_t>(indices.size());
  const auto k = static_cast<std::int64_t>(selection_.names.size());
  Batch out{torch::empty({b, 3, resolution_, resolution_}), torch::empty({b, k})};
  for (std::int64_t i = 0; i < b; ++i) {
    const auto n = static_cast<std::size_t>(indices[static_cast<std::size_t>(i)]);
    out.images[i] = preprocess_any(read_image(image_dir_ / selection_.filenames.at(n)), resolution_)[0];
    for (std::int64_t j = 0; j < k; ++j) out.labels[i][j] = static_cast<float>(selection_.labels[n][j]);
  }
  return out;
}

SubsetDataset::SubsetDataset(DatasetPtr base, std::vector<std::int64_t> indices)
    : base_(std::move(base)), indices_(std::move(indices)) {
  for (auto i : indices_)
    if (i < 0 || static_cast<std::size_t>(i) >= base_->size()) throw ShapeError("subset index out of range");
}

Batch SubsetDataset::batch(std::span<const std::int64_t> indices) const {
  std::vector<std::int64_t> mapped;
  mapped.reserve(indices.size());
  for (auto i : indices) mapped.push_back(indices_.at(static_cast<std::size_t>(i)));
  return base_->batch(mapped);
}

DatasetSplit open_dataset_dir(const fs::path& dir, const AttributeNames& names, std::int64_t resolution,
                              std::int64_t holdout) {
  fs::path annotations;
  for (const char* candidate : {"list_attr_celeba.txt", "list_attr.txt", "Anno/list_attr_celeba.txt"})
    if (fs::exists(dir / candidate)) {
      annotations = dir / candidate;
      break;
    }
  if (annotations.empty()) throw Error("no annotation file found in " + dir.string());

  fs::path images = dir;
  for (const char* candidate : {"img_align_celeba", "images"})
    if (fs::is_directory(dir / candidate)) images = dir / candidate;

  auto table = parse_attribute_annotations(annotations);
  auto selection = select_attributes(table, names);
  auto all = std::make_shared<ImageFolderDataset>(images, std::move(selection), resolution);

  std::vector<std::int64_t> train, test;
  const fs::path partition = dir / "list_eval_partition.txt";
  if (fs::exists(partition)) {
    std::ifstream in(partition);
    std::unordered_map<std::string, int> part;
    std::string file;
    int p = 0;
    while (in >> file >> p) part[file] = p;
    for (std::size_t i = 0; i < table.size(); ++i) {
      auto it = part.find(table.filenames[i]);
      if (it == part.end()) throw IntegrityError("partition file has no entry for " + table.filenames[i]);
      if (it->second == 0) train.push_back(static_cast<std::int64_t>(i));
      if (it->second == 2) test.push_back(static_cast<std::int64_t>(i));
    }
  } else {
    const auto n = static_cast<std::int64_t>(table.size());
    const auto cut = std::max<std::int64_t>(0, n - holdout);
    for (std::int64_t i = 0; i < n; ++i) (i < cut ? train : test).push_back(i);
  }
  return {std::make_shared<SubsetDataset>(all, std::move(train)), std::make_shared<SubsetDataset>(all, std::move(test))};
}

std::shared_ptr<TensorDataset> to_tensor_dataset(const Dataset& data) {
  auto b = data.all();
  return std::make_shared<TensorDataset>(b.images, b.labels, data.attribute_names());
}

std::vector<std::int64_t> epoch_order(std::size_t n, std::uint64_t seed, std::int64_t epoch, bool shuffle) {
  std::vector<std::int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (shuffle) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), 0x5eedu};
    std::mt19937_64 rng(seq);
    // Explicit Fisher-Yates: std::shuffle's draw pattern is implementation-defined.
    for (std::size_t i = n; i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng() % i);
      std::swap(order[i - 1], order[j]);
    }
  }
  return order;
}

}  // namespace faceedit
