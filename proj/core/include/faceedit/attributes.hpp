#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <torch/types.h>

namespace faceedit {

using AttributeNames = std::vector<std::string>;

// k binary labels for one image, tagged with the attribute names they refer to.
class AttributeVector {
 public:
  AttributeVector() = default;
  AttributeVector(std::vector<std::uint8_t> values, AttributeNames names);

  std::size_t size() const noexcept { return values_.size(); }
  const std::vector<std::uint8_t>& values() const noexcept { return values_; }
  const AttributeNames& names() const noexcept { return names_; }
  std::uint8_t operator[](std::size_t i) const { return values_.at(i); }

  // Copy with bit `i` set to `value`.
  AttributeVector with(std::size_t i, std::uint8_t value) const;
  // 1 x k float tensor.
  torch::Tensor to_tensor() const;

  friend bool operator==(const AttributeVector&, const AttributeVector&) = default;

 private:
  std::vector<std::uint8_t> values_;
  AttributeNames names_;
};

// Signed per-attribute change request, entries in {-1, 0, 1}.
class DifferenceVector {
 public:
  DifferenceVector() = default;
  explicit DifferenceVector(std::vector<std::int8_t> values);

  static DifferenceVector zeros(std::size_t k) { return DifferenceVector(std::vector<std::int8_t>(k, 0)); }

  std::size_t size() const noexcept { return values_.size(); }
  const std::vector<std::int8_t>& values() const noexcept { return values_; }
  std::int8_t operator[](std::size_t i) const { return values_.at(i); }
  bool is_zero() const noexcept;
  torch::Tensor to_tensor() const;

  friend bool operator==(const DifferenceVector&, const DifferenceVector&) = default;

 private:
  std::vector<std::int8_t> values_;
};

std::ostream& operator<<(std::ostream& os, const AttributeVector& v);
std::ostream& operator<<(std::ostream& os, const DifferenceVector& v);

// Raw annotation file contents with labels remapped from {-1,1} to {0,1}.
struct AttributeTable {
  AttributeNames names;
  std::vector<std::string> filenames;            // file order
  std::vector<std::vector<std::uint8_t>> rows;   // rows[i] belongs to filenames[i]

  std::size_t size() const noexcept { return filenames.size(); }
  const std::vector<std::uint8_t>& row(const std::string& filename) const;
  std::size_t column(const std::string& name) const;
  // Must be called after filenames are edited by hand; throws on duplicates.
  void rebuild_index();

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

// Parses the CelebA list_attr format: count line, names line, then
// `filename v1 .. vn` with v in {-1, 1}. A label-count other than 40 is
// accepted so the same format can carry k-column synthetic annotations.
AttributeTable parse_attribute_annotations(const std::filesystem::path& path);
AttributeTable parse_attribute_annotations(std::istream& in);

// Writes `table` back out in the annotation format ({0,1} -> {-1,1}).
void write_attribute_annotations(const std::filesystem::path& path, const AttributeTable& table);

// Per-image labels projected onto a chosen attribute subset, in `names` order.
struct AttributeSelection {
  AttributeNames names;
  std::vector<std::string> filenames;
  std::vector<std::vector<std::uint8_t>> labels;

  std::size_t size() const noexcept { return filenames.size(); }
  AttributeVector label(std::size_t i) const { return AttributeVector(labels.at(i), names); }
  // N x k float tensor of {0,1}.
  torch::Tensor label_tensor() const;
};

AttributeSelection select_attributes(const AttributeTable& table, const AttributeNames& names);

// Attribute list used unless a config overrides it.
const AttributeNames& default_attributes();
// The eight attributes scored in the classification-accuracy comparison.
const AttributeNames& evaluated_attributes();

// Batch form of v_t - v_s on N x k float tensors.
torch::Tensor difference_tensor(const torch::Tensor& target, const torch::Tensor& source);

}  // namespace faceedit

namespace faceedit {

// One `Name=0|1` assignment from an attribute spec.
struct AttributeAssignment {
  std::size_t index;
  std::uint8_t value;
};

// Parses `Name=0|1[,Name=0|1...]` against `names`. Empty or all-blank input
// gives no assignments. Unknown names raise LookupError listing `names`;
// malformed pairs raise ParseError.
std::vector<AttributeAssignment> parse_attribute_spec(const std::string& spec, const AttributeNames& names);

// `base` with every assignment applied.
AttributeVector apply_assignments(const AttributeVector& base, const std::vector<AttributeAssignment>& assignments);

// Raises LookupError naming the valid attributes.
std::size_t attribute_index(const AttributeNames& names, const std::string& name);

}  // namespace faceedit
