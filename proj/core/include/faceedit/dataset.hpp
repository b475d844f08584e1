#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include <torch/types.h>

#include "faceedit/attributes.hpp"

namespace faceedit {

struct Batch {
  torch::Tensor images;  // B x 3 x R x R
  torch::Tensor labels;  // B x k
};

// Read-only after construction; safe to share between threads.
class Dataset {
 public:
  virtual ~Dataset() = default;
  virtual std::size_t size() const = 0;
  virtual const AttributeNames& attribute_names() const = 0;
  virtual std::int64_t resolution() const = 0;
  virtual Batch batch(std::span<const std::int64_t> indices) const = 0;

  Batch range(std::int64_t begin, std::int64_t end) const;
  Batch all() const { return range(0, static_cast<std::int64_t>(size())); }
};

using DatasetPtr = std::shared_ptr<const Dataset>;

class TensorDataset final : public Dataset {
 public:
  TensorDataset(torch::Tensor images, torch::Tensor labels, AttributeNames names);

  std::size_t size() const override { return static_cast<std::size_t>(images_.size(0)); }
  const AttributeNames& attribute_names() const override { return names_; }
  std::int64_t resolution() const override { return images_.size(2); }
  Batch batch(std::span<const std::int64_t> indices) const override;

  const torch::Tensor& images() const { return images_; }
  const torch::Tensor& labels() const { return labels_; }

 private:
  torch::Tensor images_;
  torch::Tensor labels_;
  AttributeNames names_;
};

// Images decoded on demand from disk.
class ImageFolderDataset final : public Dataset {
 public:
  ImageFolderDataset(std::filesystem::path image_dir, AttributeSelection selection, std::int64_t resolution);

  std::size_t size() const override { return selection_.size(); }
  const AttributeNames& attribute_names() const override { return selection_.names; }
  std::int64_t resolution() const override { return resolution_; }
  Batch batch(std::span<const std::int64_t> indices) const override;

 private:
  std::filesystem::path image_dir_;
  AttributeSelection selection_;
  std::int64_t resolution_;
};

class SubsetDataset final : public Dataset {
 public:
  SubsetDataset(DatasetPtr base, std::vector<std::int64_t> indices);

  std::size_t size() const override { return indices_.size(); }
  const AttributeNames& attribute_names() const override { return base_->attribute_names(); }
  std::int64_t resolution() const override { return base_->resolution(); }
  Batch batch(std::span<const std::int64_t> indices) const override;

 private:
  DatasetPtr base_;
  std::vector<std::int64_t> indices_;
};

struct DatasetSplit {
  DatasetPtr train;
  DatasetPtr test;
};

// Opens a directory holding images plus an annotation file (list_attr_celeba.txt
// or list_attr.txt). Uses list_eval_partition.txt when present, otherwise the
// last `holdout` images form the test split.
DatasetSplit open_dataset_dir(const std::filesystem::path& dir, const AttributeNames& names,
                              std::int64_t resolution, std::int64_t holdout = 2000);

// Materialises any dataset in memory.
std::shared_ptr<TensorDataset> to_tensor_dataset(const Dataset& data);

// Deterministic visiting order for one epoch. With shuffle off this is 0..n-1.
std::vector<std::int64_t> epoch_order(std::size_t n, std::uint64_t seed, std::int64_t epoch, bool shuffle = true);

}  // namespace faceedit
