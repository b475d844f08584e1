#include "faceedit/attributes.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <torch/torch.h>

#include "faceedit/errors.hpp"

namespace faceedit {

AttributeVector::AttributeVector(std::vector<std::uint8_t> values, AttributeNames names)
    : values_(std::move(values)), names_(std::move(names)) {
  if (values_.empty()) throw DomainError("attribute vector must have k >= 1");
  if (names_.size() != values_.size())
    throw ShapeError("attribute vector has " + std::to_string(values_.size()) + " values but " +
                     std::to_string(names_.size()) + " names");
  for (auto v : values_)
    if (v > 1) throw DomainError("attribute values must be 0 or 1");
  auto sorted = names_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw DomainError("attribute names must be distinct");
}

AttributeVector AttributeVector::with(std::size_t i, std::uint8_t value) const {
  auto v = values_;
  v.at(i) = value;
  return AttributeVector(std::move(v), names_);
}

torch::Tensor AttributeVector::to_tensor() const {
  auto t = torch::empty({1, static_cast<std::int64_t>(values_.size())});
  auto a = t.accessor<float, 2>();
  for (std::size_t i = 0; i < values_.size(); ++i) a[0][i] = values_[i];
  return t;
}

DifferenceVector::DifferenceVector(std::vector<std::int8_t> values) : values_(std::move(values)) {
  for (auto v : values_)
    if (v < -1 || v > 1) throw DomainError("difference vector entries must be in {-1, 0, 1}");
}

bool DifferenceVector::is_zero() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](auto v) { return v == 0; });
}

torch::Tensor DifferenceVector::to_tensor() const {
  auto t = torch::empty({1, static_cast<std::int64_t>(values_.size())});
  auto a = t.accessor<float, 2>();
  for (std::size_t i = 0; i < values_.size(); ++i) a[0][i] = values_[i];
  return t;
}

std::ostream& operator<<(std::ostream& os, const AttributeVector& v) {
  os << '[';
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << int(v[i]);
  return os << ']';
}

std::ostream& operator<<(std::ostream& os, const DifferenceVector& v) {
  os << '[';
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << int(v[i]);
  return os << ']';
}

const std::vector<std::uint8_t>& AttributeTable::row(const std::string& filename) const {
  auto it = index_.find(filename);
  if (it == index_.end()) throw LookupError("no annotation row for '" + filename + "'");
  return rows[it->second];
}

std::size_t AttributeTable::column(const std::string& name) const { return attribute_index(names, name); }

std::size_t attribute_index(const AttributeNames& names, const std::string& name) {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) {
    std::string valid;
    for (const auto& n : names) valid += (valid.empty() ? "" : ", ") + n;
    throw LookupError("unknown attribute '" + name + "'; valid names: " + valid);
  }
  return static_cast<std::size_t>(it - names.begin());
}

void AttributeTable::rebuild_index() {
  index_.clear();
  for (std::size_t i = 0; i < filenames.size(); ++i)
    if (!index_.emplace(filenames[i], i).second)
      throw IntegrityError("duplicate filename '" + filenames[i] + "'");
}

AttributeTable parse_attribute_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open annotation file " + path.string());
  return parse_attribute_annotations(in);
}

AttributeTable parse_attribute_annotations(std::istream& in) {
  AttributeTable table;
  std::string line;
  std::size_t line_no = 0;

  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") != std::string::npos) return true;
    }
    return false;
  };

  if (!next_line()) throw ParseError("empty annotation file", line_no);
  long long declared = 0;
  {
    std::istringstream ss(line);
    if (!(ss >> declared) || declared < 0) throw ParseError("expected image count", line_no);
    std::string extra;
    if (ss >> extra) throw ParseError("trailing tokens after image count", line_no);
  }

  if (!next_line()) throw ParseError("missing attribute-name line", line_no);
  {
    std::istringstream ss(line);
    for (std::string name; ss >> name;) table.names.push_back(name);
  }
  if (table.names.empty()) throw ParseError("no attribute names declared", line_no);

  const std::size_t k = table.names.size();
  while (next_line()) {
    std::istringstream ss(line);
    std::string filename;
    ss >> filename;
    std::vector<std::uint8_t> row;
    row.reserve(k);
    for (std::string tok; ss >> tok;) {
      if (tok == "1")
        row.push_back(1);
      else if (tok == "-1")
        row.push_back(0);
      else
        throw ParseError("value '" + tok + "' is not -1 or 1", line_no);
    }
    if (row.size() != k)
      throw ParseError("expected " + std::to_string(k) + " labels, found " + std::to_string(row.size()), line_no);
    table.filenames.push_back(std::move(filename));
    table.rows.push_back(std::move(row));
  }

  if (static_cast<long long>(table.size()) != declared)
    throw IntegrityError("annotation header declares " + std::to_string(declared) + " images but " +
                         std::to_string(table.size()) + " rows were read");
  table.rebuild_index();
  return table;
}

void write_attribute_annotations(const std::filesystem::path& path, const AttributeTable& table) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write annotation file " + path.string());
  out << table.size() << '\n';
  for (std::size_t i = 0; i < table.names.size(); ++i) out << (i ? " " : "") << table.names[i];
  out << '\n';
  for (std::size_t r = 0; r < table.size(); ++r) {
    out << table.filenames[r];
    for (auto v : table.rows[r]) out << (v ? "  1" : " -1");
    out << '\n';
  }
}

torch::Tensor AttributeSelection::label_tensor() const {
  const auto n = static_cast<std::int64_t>(labels.size());
  const auto k = static_cast<std::int64_t>(names.size());
  auto t = torch::empty({n, k});
  auto a = t.accessor<float, 2>();
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < k; ++j) a[i][j] = labels[i][j];
  return t;
}

AttributeSelection select_attributes(const AttributeTable& table, const AttributeNames& names) {
  std::vector<std::size_t> cols;
  cols.reserve(names.size());
  for (const auto& n : names) cols.push_back(table.column(n));

  AttributeSelection sel;
  sel.names = names;
  sel.filenames = table.filenames;
  sel.labels.reserve(table.size());
  for (const auto& row : table.rows) {
    std::vector<std::uint8_t> projected;
    projected.reserve(cols.size());
    for (auto c : cols) projected.push_back(row[c]);
    sel.labels.push_back(std::move(projected));
  }
  return sel;
}

const AttributeNames& default_attributes() {
  static const AttributeNames names{"Bald",     "Bangs",   "Black_Hair", "Blond_Hair",         "Brown_Hair",
                                    "Bushy_Eyebrows", "Eyeglasses", "Male", "Mouth_Slightly_Open", "Mustache",
                                    "No_Beard", "Pale_Skin", "Young"};
  return names;
}

const AttributeNames& evaluated_attributes() {
  static const AttributeNames names{"Bald", "Bangs", "Blond_Hair", "Mustache",
                                    "Male", "Pale_Skin", "Young", "Mouth_Slightly_Open"};
  return names;
}

torch::Tensor difference_tensor(const torch::Tensor& target, const torch::Tensor& source) {
  if (!target.sizes().equals(source.sizes()))
    throw ShapeError("target and source attribute batches differ in shape");
  return target - source;
}

namespace {
std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}
}  // namespace

std::vector<AttributeAssignment> parse_attribute_spec(const std::string& spec, const AttributeNames& names) {
  std::vector<AttributeAssignment> out;
  if (trim(spec).empty()) return out;
  std::istringstream in(spec);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto pair = trim(item);
    const auto eq = pair.find('=');
    if (eq == std::string::npos) throw ParseError("expected Name=0|1, got '" + pair + "'");
    const auto name = trim(pair.substr(0, eq));
    const auto value = trim(pair.substr(eq + 1));
    if (value != "0" && value != "1") throw ParseError("attribute value for '" + name + "' must be 0 or 1");
    const auto index = attribute_index(names, name);
    for (const auto& a : out)
      if (a.index == index) throw ParseError("attribute '" + name + "' assigned twice");
    out.push_back({index, static_cast<std::uint8_t>(value == "1")});
  }
  return out;
}

AttributeVector apply_assignments(const AttributeVector& base, const std::vector<AttributeAssignment>& assignments) {
  auto v = base;
  for (const auto& a : assignments) v = v.with(a.index, a.value);
  return v;
}

}  // namespace faceedit
