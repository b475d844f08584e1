#include "faceedit_cli/commands.hpp"

#include <algorithm>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <pthread.h>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "faceedit/classifier.hpp"
#include "faceedit/errors.hpp"
#include "faceedit/evaluation.hpp"
#include "faceedit/experiment_data.hpp"
#include "faceedit/fid.hpp"
#include "faceedit/heatmap.hpp"
#include "faceedit/image.hpp"
#include "faceedit/sampling.hpp"
#include "faceedit/service.hpp"
#include "faceedit/trainer.hpp"

namespace faceedit::cli {

namespace fs = std::filesystem;

namespace {

TrainConfig resolve_config(const GlobalOptions& g) {
  if (g.config.empty()) throw ConfigError("--config is required");
  auto config = load_train_config(g.config);
  if (g.seed) config.seed = *g.seed;
  config.validate();
  return config;
}

fs::path require_checkpoint(const GlobalOptions& g) {
  if (g.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  return g.checkpoint;
}

std::string bits_string(const torch::Tensor& row) {
  std::ostringstream s;
  s << '[';
  for (std::int64_t i = 0; i < row.numel(); ++i) s << (i ? "," : "") << row[i].item<std::int64_t>();
  s << ']';
  return s.str();
}

bool is_image_file(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

std::vector<fs::path> list_images(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
}

// Loads the classifier at `path` when it exists, otherwise trains one on the
// experiment data (and saves it to `path` if given).
EvalClassifier obtain_classifier(const std::string& path, const ExperimentData& data, std::uint64_t seed,
                                 std::ostream& out) {
  if (!path.empty() && fs::exists(path)) return EvalClassifier::load(path);
  ClassifierTrainOptions opts;
  opts.seed = seed;
  auto classifier = train_eval_classifier(*data.classifier_train, *data.test, opts);
  out << "trained evaluation classifier, held-out accuracy " << std::fixed << std::setprecision(4)
      << classifier.heldout_accuracy() << '\n';
  if (!path.empty()) classifier.save(path);
  return classifier;
}

void print_report(std::ostream& out, const AccuracyReport& r) {
  out << std::left << std::setw(24) << "attribute" << "accuracy\n";
  for (std::size_t i = 0; i < r.names.size(); ++i)
    out << std::setw(24) << r.names[i] << std::fixed << std::setprecision(4) << r.accuracy[i] << '\n';
  out << std::setw(24) << "average" << r.average << '\n';
}

}  // namespace

int cmd_train(const GlobalOptions& g, const TrainArgs& a, std::ostream& out, std::ostream&) {
  auto config = resolve_config(g);
  if (!a.ablation.empty()) config = apply_variant(config, parse_ablation_variant(a.ablation));
  if (a.epochs > 0) config.epochs = a.epochs;

  const fs::path dir = config.checkpoint_dir.empty() ? fs::path("checkpoints") : fs::path(config.checkpoint_dir);
  const fs::path final_path = g.checkpoint.empty() ? dir / "final.pt" : fs::path(g.checkpoint);
  const fs::path log_path = config.metric_log.empty() ? final_path.parent_path() / "metrics.csv"
                                                      : fs::path(config.metric_log);

  std::unique_ptr<Trainer> trainer;
  if (!a.resume.empty()) {
    trainer = Trainer::load_checkpoint(a.resume, config);
    out << "resuming from " << a.resume << " at epoch " << trainer->epoch() << ", step " << trainer->global_step()
        << '\n';
  } else {
    trainer = std::make_unique<Trainer>(config);
  }
  auto data = load_experiment_data(trainer->config());
  check_dataset_matches(trainer->config(), *data.train);

  if (log_path.has_parent_path()) fs::create_directories(log_path.parent_path());
  const bool append = !a.resume.empty() && fs::exists(log_path);
  std::ofstream log(log_path, append ? std::ios::app : std::ios::trunc);
  if (!log) throw Error("cannot write metric log " + log_path.string());
  if (!append) log << "step,epoch,term,value\n";

  TrainOptions opts;
  opts.on_record = [&](const MetricRecord& r) { write_metric_row(log, r); };
  opts.on_epoch_end = [&](std::int64_t epoch) {
    log.flush();
    if (!config.checkpoint_dir.empty()) trainer->save_checkpoint(dir / "last.pt");
    out << "epoch " << epoch << '/' << trainer->config().epochs << " done\n" << std::flush;
  };
  trainer->train(*data.train, opts);
  trainer->save_checkpoint(final_path);
  out << "checkpoint " << final_path.string() << "\nmetrics " << log_path.string() << '\n';
  return 0;
}

int cmd_edit(const GlobalOptions& g, const EditArgs& a, std::ostream& out, std::ostream&) {
  auto models = load_models(require_checkpoint(g));
  const auto& names = models.config.attributes;
  const auto res = models.config.resolution;
  const auto assignments = parse_attribute_spec(a.set, names);

  std::optional<AttributeVector> fixed_source;
  if (!a.source.empty()) {
    fixed_source = apply_assignments(AttributeVector(std::vector<std::uint8_t>(names.size(), 0), names),
                                     parse_attribute_spec(a.source, names));
  }
  std::optional<EvalClassifier> classifier;
  if (!a.classifier.empty()) classifier = EvalClassifier::load(a.classifier);
  if (!fixed_source && !classifier && !assignments.empty())
    throw ConfigError("source attributes are unknown: pass --classifier or --source");

  if (a.input.empty() || a.output.empty()) throw ConfigError("--input and --output are required");
  const fs::path input(a.input), output(a.output);
  std::vector<std::pair<fs::path, fs::path>> jobs;
  if (fs::is_directory(input)) {
    fs::create_directories(output);
    for (const auto& f : list_images(input)) jobs.emplace_back(f, output / f.filename().replace_extension(".png"));
  } else {
    jobs.emplace_back(input, output);
  }

  torch::NoGradGuard no_grad;
  for (const auto& [in, dst] : jobs) {
    auto x = preprocess_any(read_image(in), res);
    AttributeVector source = fixed_source ? *fixed_source
                             : classifier ? classifier->estimate(x)
                                          : AttributeVector(std::vector<std::uint8_t>(names.size(), 0), names);
    auto target = apply_assignments(source, assignments);
    auto vs = source.to_tensor(), vt = target.to_tensor();
    auto edited = models.generator->edit(x, vs, vt);
    if (dst.has_parent_path()) fs::create_directories(dst.parent_path());
    write_png(dst, edited[0]);
    out << in.filename().string() << " v_s=" << bits_string(vs[0].to(torch::kInt64))
        << " v_t=" << bits_string(vt[0].to(torch::kInt64))
        << " v_d=" << bits_string(difference_tensor(vt, vs)[0].to(torch::kInt64)) << " -> " << dst.string() << '\n';
  }
  return 0;
}

int cmd_visualize(const GlobalOptions& g, const VisualizeArgs& a, std::ostream& out, std::ostream&) {
  auto models = load_models(require_checkpoint(g));
  if (a.input.empty()) throw ConfigError("--input is required");
  auto x = preprocess_any(read_image(a.input), models.config.resolution);
  auto rendering = render_attention_maps(models.discriminator, x, models.config.attributes);
  if (!a.attributes.empty()) {
    std::vector<std::string> keep;
    std::istringstream in(a.attributes);
    for (std::string name; std::getline(in, name, ',');) {
      attribute_index(models.config.attributes, name);
      keep.push_back(name);
    }
    std::erase_if(rendering.overlays, [&](const HeatmapOverlay& o) {
      return std::find(keep.begin(), keep.end(), o.attribute) == keep.end();
    });
  }
  const auto stem = fs::path(a.input).stem().string();
  for (const auto& p : write_overlays(rendering, a.output_dir, stem)) out << p.string() << '\n';
  if (!models.discriminator->has_complementary())
    out << "CAFE overlays absent: checkpoint was trained without the complementary branch\n";
  return 0;
}

int cmd_evaluate(const GlobalOptions& g, const EvaluateArgs& a, std::ostream& out, std::ostream&) {
  const fs::path report_dir(a.output_dir);

  if (a.mode == "ablation") {
    TrainConfig config = !g.config.empty() ? resolve_config(g) : load_models(require_checkpoint(g)).config;
    if (g.seed) config.seed = *g.seed;
    auto data = load_experiment_data(config);
    auto classifier = obtain_classifier(a.classifier, data, config.seed, out);
    AblationOptions opts;
    opts.n_per_attribute = a.n_per_attribute;
    opts.on_trained = [&](AblationVariant v, Trainer& t) {
      double max_cm = 0.0;
      for (const auto& r : t.log())
        if (r.term == "g_cm") max_cm = std::max(max_cm, std::abs(r.value));
      out << to_string(v) << ": trained " << t.epoch() << " epochs, max |g_cm| = " << max_cm << '\n';
    };
    auto table = run_ablation(config, {AblationVariant::kFull, AblationVariant::kNoCm, AblationVariant::kNoCab},
                              *data.train, *data.test, classifier, opts);
    write_text(report_dir / "ablation.csv", to_csv(table));
    write_text(report_dir / "ablation.json", to_json(table).dump(2) + "\n");
    out << to_csv(table) << "ordering: " << table.ordering() << '\n';
    return 0;
  }

  if (a.mode == "classifier") {
    if (a.classifier.empty()) throw ConfigError("--classifier names the file to write");
    auto config = !g.config.empty() ? resolve_config(g) : load_models(require_checkpoint(g)).config;
    auto data = load_experiment_data(config);
    ClassifierTrainOptions opts;
    opts.seed = config.seed;
    auto classifier = train_eval_classifier(*data.classifier_train, *data.test, opts);
    classifier.save(a.classifier);
    out << "held-out accuracy " << classifier.heldout_accuracy() << "\nclassifier " << a.classifier << '\n';
    return 0;
  }

  auto models = load_models(require_checkpoint(g));
  TrainConfig data_config = !g.config.empty() ? resolve_config(g) : models.config;
  auto data = load_experiment_data(data_config);
  check_dataset_matches(models.config, *data.test);
  const auto seed = g.seed.value_or(models.config.seed);
  auto classifier = obtain_classifier(a.classifier, data, seed, out);

  if (a.mode == "accuracy") {
    const auto n = std::min<std::int64_t>(a.n_per_attribute, static_cast<std::int64_t>(data.test->size()));
    auto report = eval_attribute_accuracy(generator_editor(models.generator), classifier, *data.test, n,
                                          fs::path(g.checkpoint).filename().string());
    write_text(report_dir / "accuracy.csv", to_csv(report));
    write_text(report_dir / "accuracy.json", to_json(report).dump(2) + "\n");
    print_report(out, report);
    out << "note: " << report.caveat << '\n';
    return 0;
  }

  if (a.mode == "fid") {
    auto test = data.test->all();
    const auto half = test.images.size(0) / 2;
    torch::Tensor set_a, set_b;
    if (a.fid_reference == "same") {
      set_a = set_b = test.images;
    } else if (a.fid_reference == "split") {
      auto rng = make_generator(seed);
      auto source = test.labels.slice(0, 0, half);
      auto target = sample_target_batch(source, TargetPolicy::kUniformRandomFlip, rng, models.config.flip_probability);
      set_a = generator_editor(models.generator)(test.images.slice(0, 0, half), source, target);
      set_b = test.images.slice(0, half, 2 * half);
    } else {
      throw ConfigError("--fid-reference must be split or same");
    }
    const double fid = compute_fid(set_a, set_b, [&](const torch::Tensor& x) { return classifier.embed(x); });
    nlohmann::json report{{"fid", fid},
                          {"reference", a.fid_reference},
                          {"set_a", set_a.size(0)},
                          {"set_b", set_b.size(0)},
                          {"embedder", "evaluation classifier penultimate layer"}};
    write_text(report_dir / "fid.json", report.dump(2) + "\n");
    write_text(report_dir / "fid.csv", "reference,set_a,set_b,fid\n" + a.fid_reference + "," +
                                           std::to_string(set_a.size(0)) + "," + std::to_string(set_b.size(0)) +
                                           "," + std::to_string(fid) + "\n");
    out << "FID (" << a.fid_reference << ") = " << std::setprecision(8) << fid << '\n';
    return 0;
  }

  throw ConfigError("unknown evaluate mode '" + a.mode + "' (accuracy, fid, ablation, classifier)");
}

int cmd_serve(const GlobalOptions& g, const ServeArgs& a, std::ostream& out, std::ostream&) {
  std::optional<fs::path> classifier;
  if (!a.classifier.empty()) classifier = a.classifier;
  auto service = EditService::open(require_checkpoint(g), classifier);
  HttpServer server(*service);

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  const int port = server.bind(a.host, a.port);
  if (port < 0) throw Error("cannot bind " + a.host + ":" + std::to_string(a.port));
  out << "listening on http://" << a.host << ':' << port << '\n' << std::flush;

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });
  server.listen_after_bind();
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  pthread_sigmask(SIG_UNBLOCK, &signals, nullptr);
  return 0;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Face attribute editing with complementary attention features"};
  app.fallthrough();
  app.require_subcommand(1);

  GlobalOptions g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Override the random seed");
  app.add_option("--config", g.config, "Training configuration (JSON)");
  app.add_option("--checkpoint", g.checkpoint, "Model checkpoint");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a model from a config");
  t->add_option("--ablation", train.ablation, "full, no_cm or no_cab; overrides the config");
  t->add_option("--resume", train.resume, "Checkpoint to resume from");
  t->add_option("--epochs", train.epochs, "Override the epoch count");

  EditArgs edit;
  auto* e = app.add_subcommand("edit", "Edit image(s) towards target attributes");
  e->add_option("--input,-i", edit.input, "Image file or directory")->required();
  e->add_option("--output,-o", edit.output, "Output file or directory")->required();
  e->add_option("--set", edit.set, "Target changes, Name=0|1[,Name=0|1...]");
  e->add_option("--source", edit.source, "Source attributes set to 1 over all-zero, Name=0|1,...");
  e->add_option("--classifier", edit.classifier, "Estimate source attributes with this classifier");

  VisualizeArgs vis;
  auto* v = app.add_subcommand("visualize", "Write AF/CAFE heatmap overlays");
  v->add_option("--input,-i", vis.input, "Image file")->required();
  v->add_option("--output,-o", vis.output_dir, "Output directory");
  v->add_option("--attributes", vis.attributes, "Comma-separated subset of attributes");

  EvaluateArgs ev;
  auto* x = app.add_subcommand("evaluate", "Accuracy, FID or ablation reports");
  x->add_option("--mode", ev.mode, "accuracy, fid, ablation or classifier")
      ->check(CLI::IsMember({"accuracy", "fid", "ablation", "classifier"}));
  x->add_option("--classifier", ev.classifier, "Evaluation classifier (trained and saved here if missing)");
  x->add_option("--n", ev.n_per_attribute, "Edited images per attribute");
  x->add_option("--output,-o", ev.output_dir, "Report directory");
  x->add_option("--fid-reference", ev.fid_reference, "split: edited half vs real half; same: real vs itself")
      ->check(CLI::IsMember({"split", "same"}));

  ServeArgs serve;
  auto* s = app.add_subcommand("serve", "Run the HTTP editing service");
  s->add_option("--host", serve.host, "Bind address");
  s->add_option("--port", serve.port, "Port (0 picks a free one)");
  s->add_option("--classifier", serve.classifier, "Classifier used to estimate source attributes");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& ex) {
    return app.exit(ex, out, err);
  }
  if (seed_opt->count()) g.seed = seed;

  try {
    if (t->parsed()) return cmd_train(g, train, out, err);
    if (e->parsed()) return cmd_edit(g, edit, out, err);
    if (v->parsed()) return cmd_visualize(g, vis, out, err);
    if (x->parsed()) return cmd_evaluate(g, ev, out, err);
    if (s->parsed()) return cmd_serve(g, serve, out, err);
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace faceedit::cli
