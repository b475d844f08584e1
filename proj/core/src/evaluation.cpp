#include "faceedit/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "faceedit/errors.hpp"
#include "faceedit/trainer.hpp"

namespace faceedit {

Editor generator_editor(Generator generator) {
  generator->eval();
  return [generator](const torch::Tensor& x, const torch::Tensor& source, const torch::Tensor& target) mutable {
    torch::NoGradGuard no_grad;
    return generator->edit(x, source, target);
  };
}

torch::Tensor forced_flip(const torch::Tensor& labels, std::int64_t attribute) {
  auto out = labels.clone();
  out.select(1, attribute).copy_(1 - labels.select(1, attribute));
  return out;
}

AccuracyReport eval_attribute_accuracy(const Editor& editor, const EvalClassifier& classifier, const Dataset& test,
                                       std::int64_t n_per_attribute, const std::string& model_id,
                                       std::int64_t batch_size) {
  if (test.size() == 0) throw Error("attribute accuracy needs a nonempty test set");
  if (n_per_attribute < 1 || static_cast<std::size_t>(n_per_attribute) > test.size())
    throw ConfigError("images per attribute must lie in [1, test-set size]");
  if (classifier.names() != test.attribute_names())
    throw ConfigError("classifier and test set use different attribute lists");

  AccuracyReport report;
  report.model_id = model_id;
  report.names = test.attribute_names();
  const auto k = static_cast<std::int64_t>(report.names.size());
  for (std::int64_t i = 0; i < k; ++i) {
    double correct = 0.0;
    for (std::int64_t b = 0; b < n_per_attribute; b += batch_size) {
      auto batch = test.range(b, std::min(n_per_attribute, b + batch_size));
      auto target = forced_flip(batch.labels, i);
      auto edited = editor(batch.images, batch.labels, target);
      auto predicted = (classifier.predict(edited).select(1, i) > 0.5).to(torch::kFloat32);
      correct += (predicted == target.select(1, i)).sum().item<double>();
    }
    report.accuracy.push_back(correct / static_cast<double>(n_per_attribute));
    report.counts.push_back(n_per_attribute);
  }
  report.average = std::accumulate(report.accuracy.begin(), report.accuracy.end(), 0.0) / static_cast<double>(k);
  return report;
}

nlohmann::json to_json(const AccuracyReport& r) {
  nlohmann::json per = nlohmann::json::object();
  for (std::size_t i = 0; i < r.names.size(); ++i)
    per[r.names[i]] = {{"accuracy", r.accuracy[i]}, {"count", r.counts[i]}};
  return {{"model", r.model_id},
          {"attributes", r.names},
          {"per_attribute", per},
          {"average", r.average},
          {"caveat", r.caveat}};
}

std::string to_csv(const AccuracyReport& r) {
  std::ostringstream out;
  out << "model,attribute,accuracy,count\n";
  char buf[64];
  for (std::size_t i = 0; i < r.names.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.6f", r.accuracy[i]);
    out << r.model_id << ',' << r.names[i] << ',' << buf << ',' << r.counts[i] << '\n';
  }
  std::snprintf(buf, sizeof buf, "%.6f", r.average);
  out << r.model_id << ",average," << buf << ','
      << std::accumulate(r.counts.begin(), r.counts.end(), std::int64_t{0}) << '\n';
  return out.str();
}

AblationVariant parse_ablation_variant(const std::string& name) {
  if (name == "full") return AblationVariant::kFull;
  if (name == "no_cm" || name == "no_CM") return AblationVariant::kNoCm;
  if (name == "no_cab" || name == "no_CAB") return AblationVariant::kNoCab;
  throw ConfigError("unknown ablation variant '" + name + "' (expected full, no_cm or no_cab)");
}

std::string to_string(AblationVariant v) {
  switch (v) {
    case AblationVariant::kFull:
      return "full";
    case AblationVariant::kNoCm:
      return "no_cm";
    case AblationVariant::kNoCab:
      return "no_cab";
  }
  return "?";
}

TrainConfig apply_variant(TrainConfig config, AblationVariant v) {
  config.ablation = {};
  if (v == AblationVariant::kNoCm) config.ablation.no_cm = true;
  if (v == AblationVariant::kNoCab) config.ablation.no_cab = true;
  return config;
}

std::string AblationTable::ordering() const {
  std::vector<std::size_t> idx(rows.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](auto a, auto b) { return rows[a].second.average > rows[b].second.average; });
  std::string s;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (i) s += rows[idx[i - 1]].second.average > rows[idx[i]].second.average ? " > " : " = ";
    s += to_string(rows[idx[i]].first);
  }
  return s;
}

nlohmann::json to_json(const AblationTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& [variant, report] : t.rows) {
    auto j = to_json(report);
    j["variant"] = to_string(variant);
    rows.push_back(j);
  }
  return {{"rows", rows}, {"ordering", t.ordering()}};
}

std::string to_csv(const AblationTable& t) {
  std::ostringstream out;
  out << "variant";
  if (!t.rows.empty())
    for (const auto& n : t.rows.front().second.names) out << ',' << n;
  out << ",average\n";
  char buf[64];
  for (const auto& [variant, report] : t.rows) {
    out << to_string(variant);
    for (double a : report.accuracy) {
      std::snprintf(buf, sizeof buf, "%.6f", a);
      out << ',' << buf;
    }
    std::snprintf(buf, sizeof buf, "%.6f", report.average);
    out << ',' << buf << '\n';
  }
  return out.str();
}

AblationTable run_ablation(const TrainConfig& base, const std::vector<AblationVariant>& variants, const Dataset& train,
                           const Dataset& test, const EvalClassifier& classifier, const AblationOptions& options) {
  if (variants.empty()) throw ConfigError("ablation needs at least one variant");
  AblationTable table;
  for (auto v : variants) {
    Trainer trainer(apply_variant(base, v));
    trainer.train(train);
    if (options.on_trained) options.on_trained(v, trainer);
    const auto n = std::min<std::int64_t>(options.n_per_attribute, static_cast<std::int64_t>(test.size()));
    table.rows.emplace_back(
        v, eval_attribute_accuracy(generator_editor(trainer.generator()), classifier, test, n, to_string(v)));
  }
  return table;
}

}  // namespace faceedit
