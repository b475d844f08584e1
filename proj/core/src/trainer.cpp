#include "faceedit/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "faceedit/errors.hpp"
#include "faceedit/losses.hpp"
#include "faceedit/sampling.hpp"

namespace faceedit {

namespace fs = std::filesystem;

namespace {

// Separate stream from the one torch::manual_seed drives weight init with.
constexpr std::uint64_t kSamplingStream = 0x9e3779b97f4a7c15ull;

void set_requires_grad(torch::nn::Module& m, bool on) {
  for (auto& p : m.parameters()) p.set_requires_grad(on);
}

class FrozenParameters {
 public:
  explicit FrozenParameters(torch::nn::Module& m) : m_(m) { set_requires_grad(m_, false); }
  ~FrozenParameters() { set_requires_grad(m_, true); }
  FrozenParameters(const FrozenParameters&) = delete;
  FrozenParameters& operator=(const FrozenParameters&) = delete;

 private:
  torch::nn::Module& m_;
};

double scalar(const torch::Tensor& t) { return t.item<double>(); }

torch::serialize::InputArchive open_archive(const fs::path& path) {
  if (!fs::exists(path)) throw CheckpointError("checkpoint not found: " + path.string());
  torch::serialize::InputArchive ar;
  try {
    ar.load_from(path.string());
  } catch (const c10::Error& e) {
    throw CheckpointError("corrupt checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  return ar;
}

c10::IValue read_value(torch::serialize::InputArchive& ar, const std::string& key) {
  c10::IValue v;
  if (!ar.try_read(key, v)) throw CheckpointError("checkpoint is missing '" + key + "'");
  return v;
}

TrainConfig read_config(torch::serialize::InputArchive& ar) {
  const auto version = read_value(ar, "format_version").toInt();
  if (version != kCheckpointFormatVersion)
    throw CheckpointError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointFormatVersion) + ")");
  try {
    return train_config_from_json(nlohmann::json::parse(read_value(ar, "config").toStringRef()));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint config snapshot is unreadable: ") + e.what());
  }
}

template <typename ModulePtr>
void load_module(torch::serialize::InputArchive& ar, const std::string& key, ModulePtr& module) {
  torch::serialize::InputArchive sub;
  if (!ar.try_read(key, sub)) throw CheckpointError("checkpoint is missing '" + key + "'");
  try {
    module->load(sub);
  } catch (const c10::Error& e) {
    throw CheckpointError("checkpoint entry '" + key + "' does not match the model: " + e.what_without_backtrace());
  }
}

}  // namespace

void write_metric_row(std::ostream& out, const MetricRecord& r) {
  char value[64];
  std::snprintf(value, sizeof value, "%.17g", r.value);
  out << r.step << ',' << r.epoch << ',' << r.term << ',' << value << '\n';
}

void write_metric_log(const fs::path& path, const MetricLog& log) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write metric log " + path.string());
  out << "step,epoch,term,value\n";
  for (const auto& r : log) write_metric_row(out, r);
}

MetricLog read_metric_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read metric log " + path.string());
  MetricLog log;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.rfind("step,", 0) == 0) continue;
    std::istringstream ss(line);
    std::string step, epoch, term, value;
    if (!std::getline(ss, step, ',') || !std::getline(ss, epoch, ',') || !std::getline(ss, term, ',') ||
        !std::getline(ss, value))
      throw ParseError("malformed metric row", line_no);
    log.push_back({std::stoll(step), std::stoll(epoch), term, std::stod(value)});
  }
  return log;
}

double metric(const StepMetrics& m, const std::string& term) {
  for (const auto& [k, v] : m)
    if (k == term) return v;
  throw LookupError("no metric named '" + term + "'");
}

void check_dataset_matches(const TrainConfig& config, const Dataset& data) {
  if (data.size() == 0) throw ConfigError("training dataset is empty");
  if (data.attribute_names() != config.attributes)
    throw ConfigError("dataset attributes do not match the configured attribute list");
  if (data.resolution() != config.resolution)
    throw ConfigError("dataset resolution " + std::to_string(data.resolution()) + " differs from configured " +
                      std::to_string(config.resolution));
}

Trainer::Trainer(TrainConfig config)
    : config_(std::move(config)), rng_(make_generator(config_.seed ^ kSamplingStream)) {
  config_.validate();
  weights_ = config_.effective_weights();
  torch::manual_seed(config_.seed);
  generator_ = Generator(config_.generator_config());
  discriminator_ = Discriminator(config_.discriminator_config());
  const auto betas = std::make_tuple(config_.beta1, config_.beta2);
  opt_g_ = std::make_unique<torch::optim::Adam>(
      generator_->parameters(), torch::optim::AdamOptions(config_.lr_initial).betas(betas));
  opt_d_ = std::make_unique<torch::optim::Adam>(
      discriminator_->parameters(), torch::optim::AdamOptions(config_.lr_initial).betas(betas));
}

double Trainer::current_learning_rate() const {
  return static_cast<const torch::optim::AdamOptions&>(opt_g_->param_groups().front().options()).lr();
}

void Trainer::set_learning_rate(double lr) {
  for (auto* opt : {opt_g_.get(), opt_d_.get()})
    for (auto& group : opt->param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
}

torch::Tensor Trainer::targets_for(const torch::Tensor& source) {
  return sample_target_batch(source, config_.target_policy, rng_, config_.flip_probability);
}

void Trainer::check_finite(const StepMetrics& m, const char* phase) {
  for (const auto& [k, v] : m)
    if (!std::isfinite(v)) {
      std::ostringstream dump;
      dump << "non-finite " << phase << " loss; terms:";
      for (const auto& [k2, v2] : m) dump << ' ' << k2 << '=' << v2;
      throw NumericError(dump.str());
    }
}

StepMetrics Trainer::train_step_d(const Batch& batch) {
  const auto& x = batch.images;
  const auto& source = batch.labels;
  auto target = targets_for(source);

  torch::Tensor fake;
  {
    torch::NoGradGuard no_grad;
    fake = generator_->edit(x, source, target);
  }

  opt_d_->zero_grad();
  auto f = discriminator_->extract_features(x);
  auto real_scores = discriminator_->adversarial_score(f);
  auto fake_scores = discriminator_->critic(fake);
  auto gp = gradient_penalty([this](const torch::Tensor& t) { return discriminator_->critic(t); }, x, fake, rng_);

  DiscriminatorLossParts parts;
  parts.adv = loss_adv_d(real_scores, fake_scores, gp, weights_.gradient_penalty);
  auto ab = discriminator_->attention_branch(f);
  auto cls1 = discriminator_->classify(apply_attention(f, ab.maps), 1);
  parts.ab = loss_attention_ab(ab.probs, source);
  if (discriminator_->has_complementary()) {
    auto cab = discriminator_->complementary_attention_branch(f);
    auto cls2 = discriminator_->classify(apply_attention(f, cab.maps), 2);
    parts.cab = loss_attention_cab(cab.probs, source);
    parts.cls = loss_cls_d(cls1, cls2, source);
  } else {
    parts.cab = torch::zeros({}, x.options());
    parts.cls = faceedit::binary_cross_entropy(cls1, source);
  }
  auto total = total_loss_d(parts, weights_);

  StepMetrics m{{"d_wasserstein", scalar(real_scores.mean() - fake_scores.mean())},
                {"d_gp", scalar(gp)},
                {"d_adv", scalar(parts.adv)},
                {"d_ab", scalar(parts.ab)},
                {"d_cab", scalar(parts.cab)},
                {"d_cls", scalar(parts.cls)},
                {"d_total", scalar(total)}};
  check_finite(m, "discriminator");
  total.backward();
  opt_d_->step();
  return m;
}

StepMetrics Trainer::train_step_g(const Batch& batch) {
  const auto& x = batch.images;
  const auto& source = batch.labels;
  auto target = targets_for(source);
  auto difference = difference_tensor(target, source);

  FrozenParameters frozen(*discriminator_);
  opt_g_->zero_grad();
  auto z = generator_->encode(x);
  auto fake = generator_->decode(z, difference);
  auto rec = generator_->decode(z, torch::zeros_like(difference));
  auto out = discriminator_->forward(fake);

  GeneratorLossParts parts;
  const auto adv = loss_adv_g(out.adv);
  parts.adv = -adv;
  parts.cls = out.cls2 ? loss_cls_g(out.cls1, *out.cls2, target) : faceedit::binary_cross_entropy(out.cls1, target);
  parts.rec = loss_reconstruction(x, rec);
  if (out.cab && weights_.matching > 0.0) {
    torch::Tensor a_x, ac_x;
    {
      torch::NoGradGuard no_grad;
      auto f_x = discriminator_->extract_features(x);
      a_x = discriminator_->attention_branch(f_x).features;
      ac_x = discriminator_->complementary_attention_branch(f_x).features;
    }
    parts.matching = loss_complementary_matching(a_x, ac_x, out.ab.features, out.cab->features, difference);
  } else {
    parts.matching = torch::zeros({}, x.options());
  }
  auto total = total_loss_g(parts, weights_);

  StepMetrics m{{"g_adv", scalar(adv)},
                {"g_cm", scalar(parts.matching)},
                {"g_cls", scalar(parts.cls)},
                {"g_rec", scalar(parts.rec)},
                {"g_total", scalar(total)}};
  check_finite(m, "generator");
  total.backward();
  opt_g_->step();
  return m;
}

void Trainer::record(const StepMetrics& m) {
  for (const auto& [term, value] : m) log_.push_back({global_step_, epoch_ + 1, term, value});
}

void Trainer::train(const Dataset& data, const TrainOptions& options) {
  check_dataset_matches(config_, data);
  const auto n = data.size();
  const auto bs = static_cast<std::size_t>(config_.batch_size);
  const auto batches = static_cast<std::int64_t>((n + bs - 1) / bs);

  while (epoch_ < config_.epochs) {
    const auto order = epoch_order(n, config_.seed, epoch_);
    set_learning_rate(config_.learning_rate(epoch_ + 1));
    while (step_in_epoch_ < batches) {
      if (options.max_steps >= 0 && global_step_ >= options.max_steps) return;
      const auto begin = static_cast<std::size_t>(step_in_epoch_) * bs;
      const auto end = std::min(n, begin + bs);
      const auto batch = data.batch(std::span<const std::int64_t>(order.data() + begin, end - begin));

      const auto before = log_.size();
      record(train_step_d(batch));
      if ((global_step_ + 1) % config_.d_steps_per_g == 0) record(train_step_g(batch));
      if (options.on_record)
        for (auto i = before; i < log_.size(); ++i) options.on_record(log_[i]);
      ++global_step_;
      ++step_in_epoch_;
    }
    step_in_epoch_ = 0;
    ++epoch_;
    if (options.on_epoch_end) options.on_epoch_end(epoch_);
  }
}

void Trainer::save_checkpoint(const fs::path& path) const {
  torch::serialize::OutputArchive ar;
  ar.write("format_version", c10::IValue(kCheckpointFormatVersion));
  ar.write("config", c10::IValue(to_json(config_).dump()));
  torch::serialize::OutputArchive g, d, og, od;
  generator_->save(g);
  discriminator_->save(d);
  opt_g_->save(og);
  opt_d_->save(od);
  ar.write("generator", g);
  ar.write("discriminator", d);
  ar.write("opt_g", og);
  ar.write("opt_d", od);
  ar.write("epoch", c10::IValue(epoch_));
  ar.write("step_in_epoch", c10::IValue(step_in_epoch_));
  ar.write("global_step", c10::IValue(global_step_));
  ar.write("rng_state", rng_.get_state());

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const auto tmp = fs::path(path.string() + ".tmp");
  ar.save_to(tmp.string());
  fs::rename(tmp, path);
}

std::unique_ptr<Trainer> Trainer::load_checkpoint(const fs::path& path, const std::optional<TrainConfig>& expected) {
  auto ar = open_archive(path);
  auto config = read_config(ar);
  if (expected) {
    if (expected->attributes != config.attributes)
      throw CheckpointError("checkpoint attribute list differs from the requested configuration");
    if (expected->resolution != config.resolution)
      throw CheckpointError("checkpoint resolution differs from the requested configuration");
  }
  auto trainer = std::make_unique<Trainer>(config);
  load_module(ar, "generator", trainer->generator_);
  load_module(ar, "discriminator", trainer->discriminator_);
  torch::serialize::InputArchive og, od;
  if (!ar.try_read("opt_g", og) || !ar.try_read("opt_d", od))
    throw CheckpointError("checkpoint has no optimiser state");
  trainer->opt_g_->load(og);
  trainer->opt_d_->load(od);
  trainer->epoch_ = read_value(ar, "epoch").toInt();
  trainer->step_in_epoch_ = read_value(ar, "step_in_epoch").toInt();
  trainer->global_step_ = read_value(ar, "global_step").toInt();
  torch::Tensor rng_state;
  if (!ar.try_read("rng_state", rng_state)) throw CheckpointError("checkpoint is missing 'rng_state'");
  trainer->rng_.set_state(rng_state);
  return trainer;
}

LoadedModels load_models(const fs::path& checkpoint) {
  auto ar = open_archive(checkpoint);
  LoadedModels m;
  m.config = read_config(ar);
  m.generator = Generator(m.config.generator_config());
  m.discriminator = Discriminator(m.config.discriminator_config());
  load_module(ar, "generator", m.generator);
  load_module(ar, "discriminator", m.discriminator);
  m.generator->eval();
  m.discriminator->eval();
  return m;
}

}  // namespace faceedit
