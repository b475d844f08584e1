#include "faceedit/experiment_data.hpp"

#include "faceedit/errors.hpp"
#include "faceedit/synthetic.hpp"

namespace faceedit {

namespace {

std::shared_ptr<TensorDataset> synthetic_split(SyntheticSpec spec, std::uint64_t seed, std::int64_t count,
                                               torch::Tensor* masks = nullptr) {
  spec.seed = seed;
  spec.count = count;
  auto d = make_synthetic_dataset(spec);
  if (masks) *masks = d.masks;
  return std::make_shared<TensorDataset>(d.images, d.labels, d.names);
}

}  // namespace

ExperimentData load_experiment_data(const TrainConfig& config) {
  config.validate();
  ExperimentData out;
  if (config.dataset == "synthetic") {
    SyntheticSpec spec;
    spec.resolution = config.resolution;
    spec.attributes.clear();
    for (const auto& name : config.attributes) spec.attributes.push_back(synthetic_attribute_from_string(name));
    spec.validate();
    torch::Tensor masks;
    out.train = synthetic_split(spec, config.synthetic_seed, config.synthetic_count, &masks);
    out.test = synthetic_split(spec, config.synthetic_seed + kSyntheticTestSeedOffset, config.synthetic_test_count);
    out.classifier_train =
        synthetic_split(spec, config.synthetic_seed + kSyntheticClassifierSeedOffset, 2 * config.synthetic_count);
    out.masks = masks;
    return out;
  }
  auto split = open_dataset_dir(config.dataset, config.attributes, config.resolution, config.holdout);
  out.train = split.train;
  out.test = split.test;
  out.classifier_train = split.train;
  return out;
}

}  // namespace faceedit
