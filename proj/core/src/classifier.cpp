#include "faceedit/classifier.hpp"

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "faceedit/errors.hpp"

namespace faceedit {

namespace nn = torch::nn;
namespace fs = std::filesystem;

namespace {
constexpr std::int64_t kClassifierFormatVersion = 1;
}

AttributeClassifierImpl::AttributeClassifierImpl(std::int64_t resolution, std::int64_t attributes, std::int64_t width)
    : resolution_(resolution) {
  if (resolution % 8 != 0) throw ConfigError("classifier resolution must be divisible by 8");
  body_ = register_module("body", nn::Sequential());
  std::int64_t in = 3;
  for (std::int64_t b = 0; b < 3; ++b) {
    const auto out = width << b;
    body_->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, 4).stride(2).padding(1)));
    body_->push_back(nn::BatchNorm2d(out));
    body_->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
    in = out;
  }
  const auto side = resolution / 8;
  hidden_ = register_module("hidden", nn::Sequential(nn::Linear(in * side * side, 64),
                                                     nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2))));
  out_ = register_module("out", nn::Linear(64, attributes));
}

torch::Tensor AttributeClassifierImpl::embed(const torch::Tensor& x) {
  return hidden_->forward(body_->forward(x).flatten(1));
}

torch::Tensor AttributeClassifierImpl::logits(const torch::Tensor& x) { return out_->forward(embed(x)); }

EvalClassifier::EvalClassifier(AttributeClassifier net, AttributeNames names, double heldout_accuracy)
    : net_(std::move(net)), names_(std::move(names)), heldout_accuracy_(heldout_accuracy) {
  net_->eval();
}

void EvalClassifier::check_input(const torch::Tensor& x) const {
  if (x.dim() != 4 || x.size(1) != 3 || x.size(2) != resolution() || x.size(3) != resolution())
    throw ShapeError("classifier expects B x 3 x " + std::to_string(resolution()) + " x " +
                     std::to_string(resolution()) + " input");
}

torch::Tensor EvalClassifier::predict(const torch::Tensor& x) const {
  check_input(x);
  torch::NoGradGuard no_grad;
  return net_->forward(x);
}

torch::Tensor EvalClassifier::embed(const torch::Tensor& x) const {
  check_input(x);
  torch::NoGradGuard no_grad;
  return net_->embed(x);
}

AttributeVector EvalClassifier::estimate(const torch::Tensor& image) const {
  auto p = predict(image.dim() == 3 ? image.unsqueeze(0) : image);
  std::vector<std::uint8_t> bits(names_.size());
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = p[0][static_cast<std::int64_t>(i)].item<float>() > 0.5f;
  return AttributeVector(std::move(bits), names_);
}

void EvalClassifier::save(const fs::path& path) const {
  torch::serialize::OutputArchive ar, net;
  net_->save(net);
  ar.write("format_version", c10::IValue(kClassifierFormatVersion));
  ar.write("net", net);
  nlohmann::json meta{{"attributes", names_},
                      {"resolution", resolution()},
                      {"heldout_accuracy", heldout_accuracy_},
                      {"width", net_->named_parameters()["body.0.weight"].size(0)}};
  ar.write("meta", c10::IValue(meta.dump()));
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const auto tmp = fs::path(path.string() + ".tmp");
  ar.save_to(tmp.string());
  fs::rename(tmp, path);
}

EvalClassifier EvalClassifier::load(const fs::path& path) {
  if (!fs::exists(path)) throw CheckpointError("classifier checkpoint not found: " + path.string());
  torch::serialize::InputArchive ar;
  try {
    ar.load_from(path.string());
    c10::IValue version, meta_value;
    if (!ar.try_read("format_version", version) || version.toInt() != kClassifierFormatVersion)
      throw CheckpointError("unsupported classifier checkpoint version in " + path.string());
    if (!ar.try_read("meta", meta_value)) throw CheckpointError("classifier checkpoint has no metadata");
    auto meta = nlohmann::json::parse(meta_value.toStringRef());
    auto names = meta.at("attributes").get<AttributeNames>();
    AttributeClassifier net(meta.at("resolution").get<std::int64_t>(), static_cast<std::int64_t>(names.size()),
                            meta.at("width").get<std::int64_t>());
    torch::serialize::InputArchive sub;
    if (!ar.try_read("net", sub)) throw CheckpointError("classifier checkpoint has no weights");
    net->load(sub);
    return EvalClassifier(net, std::move(names), meta.at("heldout_accuracy").get<double>());
  } catch (const c10::Error& e) {
    throw CheckpointError("corrupt classifier checkpoint " + path.string() + ": " + e.what_without_backtrace());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("corrupt classifier metadata in " + path.string() + ": " + e.what());
  }
}

double multilabel_accuracy(const EvalClassifier& classifier, const Dataset& data, std::int64_t batch_size) {
  const auto n = static_cast<std::int64_t>(data.size());
  if (n == 0) throw Error("accuracy on an empty dataset");
  double correct = 0.0, total = 0.0;
  for (std::int64_t b = 0; b < n; b += batch_size) {
    auto batch = data.range(b, std::min(n, b + batch_size));
    auto pred = (classifier.predict(batch.images) > 0.5).to(torch::kFloat32);
    correct += (pred == batch.labels).sum().item<double>();
    total += static_cast<double>(batch.labels.numel());
  }
  return correct / total;
}

EvalClassifier train_eval_classifier(const Dataset& train, const Dataset& heldout,
                                     const ClassifierTrainOptions& options) {
  if (train.size() == 0 || heldout.size() == 0) throw Error("classifier training needs nonempty train and held-out sets");
  if (train.attribute_names() != heldout.attribute_names())
    throw ConfigError("train and held-out sets use different attribute lists");

  torch::manual_seed(options.seed);
  AttributeClassifier net(train.resolution(), static_cast<std::int64_t>(train.attribute_names().size()),
                          options.width);
  torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(options.learning_rate));
  const auto n = train.size();
  const auto bs = static_cast<std::size_t>(options.batch_size);
  for (std::int64_t epoch = 0; epoch < options.epochs; ++epoch) {
    net->train();
    const auto order = epoch_order(n, options.seed, epoch);
    for (std::size_t begin = 0; begin < n; begin += bs) {
      const auto end = std::min(n, begin + bs);
      if (end - begin < 2) continue;  // batch norm needs more than one sample
      auto batch = train.batch(std::span<const std::int64_t>(order.data() + begin, end - begin));
      opt.zero_grad();
      auto loss = torch::binary_cross_entropy_with_logits(net->logits(batch.images), batch.labels);
      loss.backward();
      opt.step();
    }
  }
  EvalClassifier classifier(net, train.attribute_names(), 0.0);
  const double acc = multilabel_accuracy(classifier, heldout);
  if (acc < options.min_accuracy)
    throw Error("evaluation classifier underfits: held-out accuracy " + std::to_string(acc) + " < " +
                std::to_string(options.min_accuracy));
  return EvalClassifier(net, train.attribute_names(), acc);
}

}  // namespace faceedit
