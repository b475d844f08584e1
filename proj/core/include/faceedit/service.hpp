#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "faceedit/classifier.hpp"
#include "faceedit/errors.hpp"
#include "faceedit/trainer.hpp"

namespace faceedit {

std::string base64_encode(std::string_view bytes);
// Raises ParseError on malformed input.
std::string base64_decode(std::string_view text);

// A request the service rejects; `status` is the HTTP status to answer with.
class RequestError : public Error {
 public:
  RequestError(int status, const std::string& what) : Error(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

// Editing and attention rendering over one loaded checkpoint. Handlers take a
// shared lock, so any number may run at once; reload() takes it exclusively
// and waits for in-flight requests to finish.
class EditService {
 public:
  EditService(LoadedModels models, std::optional<EvalClassifier> classifier);
  static std::unique_ptr<EditService> open(const std::filesystem::path& checkpoint,
                                           const std::optional<std::filesystem::path>& classifier);

  nlohmann::json attributes() const;

  // request: exactly one of {"toggles": {name: 0|1}, "target_bits": [..]};
  // optional "source_bits": [..] overriding the classifier estimate;
  // optional "include_attention": bool.
  nlohmann::json edit(std::string_view image_bytes, const nlohmann::json& request) const;
  nlohmann::json attention(std::string_view image_bytes) const;

  void reload(LoadedModels models, std::optional<EvalClassifier> classifier);

 private:
  struct State;
  static std::shared_ptr<const State> make_state(LoadedModels models, std::optional<EvalClassifier> classifier);

  mutable std::shared_mutex mutex_;
  std::shared_ptr<const State> state_;
};

// HTTP front end for EditService:
//   GET  /attributes   ordered attribute list
//   POST /edit         multipart: "image" file + "request" JSON text
//   POST /attention    multipart: "image" file
//   GET  /healthz      200
// A JSON body with a base64 "image" field is accepted in place of multipart.
// Errors answer with {"error": {"status": n, "message": "..."}}.
class HttpServer {
 public:
  explicit HttpServer(EditService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds to `port` (0 picks a free one) and returns the bound port, or -1.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  bool listen_after_bind();
  void stop();
  bool is_running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace faceedit
