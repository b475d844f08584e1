#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "faceedit/errors.hpp"
#include "faceedit/image.hpp"
#include "faceedit/service.hpp"
#include "faceedit/synthetic.hpp"
#include "faceedit/train_config.hpp"
#include "faceedit/trainer.hpp"
#include "faceedit_cli/commands.hpp"

using namespace faceedit;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "faceedit");
  std::ostringstream out, err;
  const int code = faceedit::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// One tiny trained checkpoint per variant, shared by every test here.
class Workspace {
 public:
  static Workspace& get() {
    static Workspace w;
    return w;
  }
  fs::path dir, config, checkpoint, no_cab_checkpoint, image, classifier;

 private:
  Workspace() : dir(fs::temp_directory_path() / "faceedit_cli_tests") {
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto c = synthetic_train_config();
    c.epochs = 1;
    c.synthetic_count = 32;
    c.synthetic_test_count = 64;
    c.g_base_width = 4;
    c.d_base_width = 4;
    c.checkpoint_dir = (dir / "ckpt").string();
    config = dir / "tiny.json";
    save_train_config(config, c);
    checkpoint = dir / "full.pt";
    no_cab_checkpoint = dir / "no_cab.pt";
    classifier = dir / "classifier.pt";
    auto r = run_cli({"--config", config.string(), "--checkpoint", checkpoint.string(), "train"});
    if (r.code != 0) throw std::runtime_error("training failed: " + r.err);
    r = run_cli({"--config", config.string(), "--checkpoint", no_cab_checkpoint.string(), "train", "--ablation", "no_cab"});
    if (r.code != 0) throw std::runtime_error("training failed: " + r.err);
    SyntheticSpec s;
    s.count = 1;
    write_png(dir / "face.png", make_synthetic_dataset(s).images[0]);
    image = dir / "face.png";
  }
};

}  // namespace

TEST(Cli, MissingConfigIsNonzeroExit) {
  auto r = run_cli({"train"});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("--config"), std::string::npos);
  EXPECT_NE(run_cli({"--config", "/nonexistent/config.json", "train"}).code, 0);
}

TEST(Cli, UnknownSubcommandAndMissingSubcommand) {
  EXPECT_NE(run_cli({"frobnicate"}).code, 0);
  EXPECT_NE(run_cli({}).code, 0);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
}

TEST(Cli, TrainWritesCheckpointAndMetricLog) {
  auto& w = Workspace::get();
  EXPECT_TRUE(fs::exists(w.checkpoint));
  auto log = read_metric_log(w.checkpoint.parent_path() / "metrics.csv");
  EXPECT_FALSE(log.empty());
  EXPECT_TRUE(fs::exists(fs::path(w.dir / "ckpt" / "last.pt")));
}

TEST(Cli, AblationFlagOverridesConfig) {
  auto& w = Workspace::get();
  auto full = load_models(w.checkpoint);
  auto no_cab = load_models(w.no_cab_checkpoint);
  EXPECT_FALSE(full.config.ablation.no_cab);
  EXPECT_TRUE(no_cab.config.ablation.no_cab);
  EXPECT_FALSE(no_cab.discriminator->has_complementary());
  EXPECT_NE(run_cli({"--config", w.config.string(), "train", "--ablation", "no_gp"}).code, 0);
}

TEST(Cli, SeedOverrideChangesRun) {
  auto& w = Workspace::get();
  auto a = w.dir / "seed_a.pt", b = w.dir / "seed_b.pt";
  ASSERT_EQ(run_cli({"--seed", "5", "--config", w.config.string(), "--checkpoint", a.string(), "train"}).code, 0);
  ASSERT_EQ(run_cli({"--seed", "6", "--config", w.config.string(), "--checkpoint", b.string(), "train"}).code, 0);
  EXPECT_EQ(load_models(a).config.seed, 5u);
  auto wa = load_models(a).generator->parameters(), wb = load_models(b).generator->parameters();
  ASSERT_EQ(wa.size(), wb.size());
  bool differs = false;
  for (std::size_t i = 0; i < wa.size(); ++i) differs |= !torch::equal(wa[i], wb[i]);
  EXPECT_TRUE(differs);
}

TEST(Cli, EmptySpecEditIsReconstruction) {
  auto& w = Workspace::get();
  auto out = w.dir / "recon.png";
  auto r = run_cli({"--checkpoint", w.checkpoint.string(), "edit", "-i", w.image.string(), "-o", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("v_d=[0,0,0]"), std::string::npos);
  auto models = load_models(w.checkpoint);
  models.generator->eval();
  torch::NoGradGuard no_grad;
  auto x = preprocess_any(read_image(w.image), 32);
  auto zeros = torch::zeros({1, 3});
  auto expected = encode_png(models.generator->decode(models.generator->encode(x), zeros)[0]);
  EXPECT_EQ(read_file(out), expected);
}

TEST(Cli, EditWithSourceAndSet) {
  auto& w = Workspace::get();
  auto out = w.dir / "edited.png";
  auto r = run_cli({"--checkpoint", w.checkpoint.string(), "edit", "-i", w.image.string(), "-o", out.string(), "--source",
                "Hat_Band=1", "--set", "Hat_Band=0,Chin_Patch=1"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("v_s=[1,0,0] v_t=[0,1,0] v_d=[-1,1,0]"), std::string::npos) << r.out;
  EXPECT_EQ(read_image(out).sizes(), (std::vector<std::int64_t>{32, 32, 3}));
}

TEST(Cli, EditErrors) {
  auto& w = Workspace::get();
  auto out = (w.dir / "x.png").string();
  auto ck = w.checkpoint.string();
  auto r = run_cli({"--checkpoint", ck, "edit", "-i", w.image.string(), "-o", out, "--source", "", "--set", "Wings=1"});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("Hat_Band"), std::string::npos);
  EXPECT_NE(run_cli({"--checkpoint", ck, "edit", "-i", w.image.string(), "-o", out, "--set", "Hat_Band=1"}).code, 0);
  EXPECT_NE(run_cli({"--checkpoint", ck, "edit", "-i", "/nonexistent.png", "-o", out}).code, 0);
  EXPECT_NE(run_cli({"edit", "-i", w.image.string(), "-o", out}).code, 0);
}

TEST(Cli, EditDirectory) {
  auto& w = Workspace::get();
  auto in = w.dir / "batch_in", out = w.dir / "batch_out";
  fs::create_directories(in);
  fs::copy_file(w.image, in / "a.png", fs::copy_options::overwrite_existing);
  fs::copy_file(w.image, in / "b.png", fs::copy_options::overwrite_existing);
  std::ofstream(in / "notes.txt") << "skip me";
  ASSERT_EQ(run_cli({"--checkpoint", w.checkpoint.string(), "edit", "-i", in.string(), "-o", out.string()}).code, 0);
  EXPECT_TRUE(fs::exists(out / "a.png"));
  EXPECT_TRUE(fs::exists(out / "b.png"));
  EXPECT_FALSE(fs::exists(out / "notes.png"));
}

TEST(Cli, VisualizeWritesTwoKFiles) {
  auto& w = Workspace::get();
  auto dir = w.dir / "heat";
  fs::remove_all(dir);
  auto r = run_cli({"--checkpoint", w.checkpoint.string(), "visualize", "-i", w.image.string(), "-o", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(std::distance(fs::directory_iterator(dir), fs::directory_iterator{}), 6);
  EXPECT_TRUE(fs::exists(dir / "face_Chin_Patch_CAFE.png"));

  auto sub = w.dir / "heat_sub";
  fs::remove_all(sub);
  r = run_cli({"--checkpoint", w.checkpoint.string(), "visualize", "-i", w.image.string(), "-o", sub.string(),
           "--attributes", "Hat_Band"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(std::distance(fs::directory_iterator(sub), fs::directory_iterator{}), 2);
}

TEST(Cli, VisualizeNoCabReportsAbsence) {
  auto& w = Workspace::get();
  auto dir = w.dir / "heat_nocab";
  fs::remove_all(dir);
  auto r = run_cli({"--checkpoint", w.no_cab_checkpoint.string(), "visualize", "-i", w.image.string(), "-o", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("CAFE overlays absent"), std::string::npos);
  EXPECT_EQ(std::distance(fs::directory_iterator(dir), fs::directory_iterator{}), 3);
}

TEST(Cli, EvaluateFidSameIsZero) {
  auto& w = Workspace::get();
  auto dir = w.dir / "reports";
  auto r = run_cli({"--checkpoint", w.checkpoint.string(), "evaluate", "--mode", "fid", "--fid-reference", "same",
                "--classifier", w.classifier.string(), "-o", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  auto report = json::parse(read_file(dir / "fid.json"));
  EXPECT_LE(std::abs(report["fid"].get<double>()), 1e-6);
  EXPECT_TRUE(fs::exists(dir / "fid.csv"));
  EXPECT_TRUE(fs::exists(w.classifier));
}

TEST(Cli, EvaluateAccuracyWritesReports) {
  auto& w = Workspace::get();
  auto dir = w.dir / "reports_acc";
  auto r = run_cli({"--checkpoint", w.checkpoint.string(), "evaluate", "--mode", "accuracy", "--n", "16",
                "--classifier", w.classifier.string(), "-o", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  auto report = json::parse(read_file(dir / "accuracy.json"));
  EXPECT_EQ(report["attributes"].size(), 3u);
  EXPECT_EQ(report["per_attribute"]["Hat_Band"]["count"], 16);
  EXPECT_TRUE(fs::exists(dir / "accuracy.csv"));
  EXPECT_NE(run_cli({"--checkpoint", w.checkpoint.string(), "evaluate", "--mode", "bogus"}).code, 0);
}

TEST(Base64, RoundTripAndErrors) {
  for (const std::string& s : std::vector<std::string>{"", "a", "ab", "abc", std::string("\0\xff\x10", 3)})
    EXPECT_EQ(base64_decode(base64_encode(s)), s);
  EXPECT_EQ(base64_encode("hello"), "aGVsbG8=");
  EXPECT_THROW(base64_decode("**notbase64**"), ParseError);
}

class Service : public ::testing::Test {
 protected:
  static std::unique_ptr<EditService> open(const fs::path& ck) { return EditService::open(ck, std::nullopt); }
  std::string png() { return read_file(Workspace::get().image); }
};

TEST_F(Service, AttributesDocument) {
  auto svc = open(Workspace::get().checkpoint);
  auto j = svc->attributes();
  EXPECT_EQ(j["attributes"], json({"Hat_Band", "Chin_Patch", "Bright_Skin"}));
  EXPECT_EQ(j["resolution"], 32);
  EXPECT_EQ(j["complementary"], true);
  EXPECT_EQ(j["classifier"], false);
}

TEST_F(Service, EditEchoesDifference) {
  auto svc = open(Workspace::get().checkpoint);
  auto j = svc->edit(png(), {{"source_bits", {1, 0, 1}}, {"toggles", {{"Chin_Patch", 1}}}});
  EXPECT_EQ(j["v_t"], json({1, 1, 1}));
  EXPECT_EQ(j["v_d"], json({0, 1, 0}));
  EXPECT_EQ(j["source_estimated"], false);
  auto img = decode_image(base64_decode(j["image"].get<std::string>()));
  EXPECT_EQ(img.sizes(), (std::vector<std::int64_t>{32, 32, 3}));
  for (int trial = 0; trial < 8; ++trial) {
    std::vector<int> s{trial & 1, (trial >> 1) & 1, (trial >> 2) & 1}, t{1 - s[0], s[1], 1};
    auto r = svc->edit(png(), {{"source_bits", s}, {"target_bits", t}});
    for (int i = 0; i < 3; ++i) EXPECT_EQ(r["v_d"][i].get<int>(), t[i] - s[i]);
  }
}

TEST_F(Service, EditRequestErrors) {
  auto svc = open(Workspace::get().checkpoint);
  auto status = [&](const json& req, std::string image) {
    try {
      svc->edit(image, req);
    } catch (const RequestError& e) {
      return e.status();
    }
    return 200;
  };
  EXPECT_EQ(status({{"toggles", {{"Hat_Band", 1}}}}, png()), 400);  // no classifier, no source_bits
  EXPECT_EQ(status({{"source_bits", {0, 0, 0}}}, png()), 400);
  EXPECT_EQ(status({{"source_bits", {0, 0, 0}}, {"toggles", json::object()}, {"target_bits", {0, 0, 0}}}, png()), 400);
  EXPECT_EQ(status({{"source_bits", {0, 0}}, {"target_bits", {0, 0, 0}}}, png()), 400);
  EXPECT_EQ(status({{"source_bits", {0, 0, 2}}, {"target_bits", {0, 0, 0}}}, png()), 400);
  EXPECT_EQ(status({{"source_bits", {0, 0, 0}}, {"toggles", {{"Wings", 1}}}}, png()), 400);
  EXPECT_EQ(status({{"source_bits", {0, 0, 0}}, {"toggles", {{"Hat_Band", 3}}}}, png()), 400);
  EXPECT_EQ(status({{"source_bits", {0, 0, 0}}, {"target_bits", {0, 0, 0}}}, "garbage"), 400);
  EXPECT_EQ(status({{"source_bits", {0, 0, 0}}, {"target_bits", {0, 0, 0}}}, ""), 400);
}

TEST_F(Service, AttentionPanel) {
  auto svc = open(Workspace::get().checkpoint);
  auto j = svc->attention(png());
  ASSERT_EQ(j["maps"].size(), 6u);
  for (const auto& m : j["maps"]) {
    EXPECT_TRUE(m["available"].get<bool>());
    auto map = decode_image(base64_decode(m["map"].get<std::string>()));
    EXPECT_EQ(map.size(0), 32);
  }
  auto no_cab = open(Workspace::get().no_cab_checkpoint);
  auto k = no_cab->attention(png());
  ASSERT_EQ(k["maps"].size(), 6u);
  EXPECT_EQ(k["complementary"], false);
  for (const auto& m : k["maps"]) EXPECT_EQ(m["available"].get<bool>(), m["branch"] == "AF");
  auto e = svc->edit(png(), {{"source_bits", {0, 0, 0}}, {"target_bits", {0, 0, 0}}, {"include_attention", true}});
  EXPECT_EQ(e["attention"].size(), 6u);
}

TEST_F(Service, ClassifierMismatchRejected) {
  auto& w = Workspace::get();
  auto models = load_models(w.checkpoint);
  AttributeClassifier net(16, 3);
  EvalClassifier wrong_res(net, models.config.attributes, 1.0);
  EXPECT_THROW(EditService(models, wrong_res), ConfigError);
}

class Http : public Service {
 protected:
  void SetUp() override {
    svc_ = open(Workspace::get().checkpoint);
    server_ = std::make_unique<HttpServer>(*svc_);
    port_ = server_->bind("127.0.0.1", 0);
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    for (int i = 0; i < 200 && !server_->is_running(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  void TearDown() override {
    server_->stop();
    if (thread_.joinable()) thread_.join();
  }
  httplib::Client client() { return httplib::Client("127.0.0.1", port_); }

  std::unique_ptr<EditService> svc_;
  std::unique_ptr<HttpServer> server_;
  std::thread thread_;
  int port_ = 0;
};

TEST_F(Http, HealthAndAttributes) {
  auto c = client();
  auto h = c.Get("/healthz");
  ASSERT_TRUE(h);
  EXPECT_EQ(h->status, 200);
  auto a = c.Get("/attributes");
  ASSERT_TRUE(a);
  EXPECT_EQ(json::parse(a->body)["attributes"].size(), 3u);
}

TEST_F(Http, MultipartEdit) {
  auto c = client();
  httplib::MultipartFormDataItems items{
      {"image", png(), "face.png", "image/png"},
      {"request", json{{"source_bits", {0, 0, 0}}, {"toggles", {{"Hat_Band", 1}}}}.dump(), "", "application/json"}};
  auto r = c.Post("/edit", items);
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 200) << r->body;
  auto j = json::parse(r->body);
  EXPECT_EQ(j["v_d"], json({1, 0, 0}));
  int nonzero = 0;
  for (const auto& v : j["v_d"]) nonzero += v.get<int>() != 0;
  EXPECT_EQ(nonzero, 1);
}

TEST_F(Http, JsonBodyEditAndAttention) {
  auto c = client();
  json body{{"image", base64_encode(png())}, {"source_bits", {1, 1, 0}}, {"target_bits", {0, 1, 0}}};
  auto r = c.Post("/edit", body.dump(), "application/json");
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 200) << r->body;
  EXPECT_EQ(json::parse(r->body)["v_d"], json({-1, 0, 0}));
  httplib::MultipartFormDataItems items{{"image", png(), "face.png", "image/png"}};
  auto a = c.Post("/attention", items);
  ASSERT_TRUE(a);
  ASSERT_EQ(a->status, 200);
  EXPECT_EQ(json::parse(a->body)["maps"].size(), 6u);
}

TEST_F(Http, ClientErrorsAre4xx) {
  auto c = client();
  auto bad_json = c.Post("/edit", "{not json", "application/json");
  ASSERT_TRUE(bad_json);
  EXPECT_EQ(bad_json->status, 400);
  EXPECT_EQ(json::parse(bad_json->body)["error"]["status"], 400);

  auto no_image = c.Post("/edit", json{{"source_bits", {0, 0, 0}}}.dump(), "application/json");
  ASSERT_TRUE(no_image);
  EXPECT_EQ(no_image->status, 400);

  httplib::MultipartFormDataItems items{{"request", "{}", "", "application/json"}};
  auto missing = c.Post("/attention", items);
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 400);

  json unknown{{"image", base64_encode(png())}, {"source_bits", {0, 0, 0}}, {"toggles", {{"Wings", 1}}}};
  auto u = c.Post("/edit", unknown.dump(), "application/json");
  ASSERT_TRUE(u);
  EXPECT_EQ(u->status, 400);
  EXPECT_NE(json::parse(u->body)["error"]["message"].get<std::string>().find("Hat_Band"), std::string::npos);

  auto nf = c.Get("/nowhere");
  ASSERT_TRUE(nf);
  EXPECT_EQ(nf->status, 404);
}
