#include "faceedit/service.hpp"

#include <mutex>

#include <httplib.h>
#include <sodium.h>
#include <torch/torch.h>

#include "faceedit/heatmap.hpp"
#include "faceedit/image.hpp"

namespace faceedit {

using nlohmann::json;

std::string base64_encode(std::string_view bytes) {
  std::string out(sodium_base64_encoded_len(bytes.size(), sodium_base64_VARIANT_ORIGINAL), '\0');
  sodium_bin2base64(out.data(), out.size(), reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(),
                    sodium_base64_VARIANT_ORIGINAL);
  out.pop_back();  // terminating NUL
  return out;
}

std::string base64_decode(std::string_view text) {
  std::string out(text.size() / 4 * 3 + 3, '\0');
  std::size_t len = 0;
  if (sodium_base642bin(reinterpret_cast<unsigned char*>(out.data()), out.size(), text.data(), text.size(), " \r\n",
                        &len, nullptr, sodium_base64_VARIANT_ORIGINAL) != 0)
    throw ParseError("malformed base64 payload");
  out.resize(len);
  return out;
}

struct EditService::State {
  LoadedModels models;
  std::optional<EvalClassifier> classifier;
  AttributeNames names;
  std::int64_t resolution;
};

namespace {

json bits_json(const std::vector<std::uint8_t>& v) { return json(std::vector<int>(v.begin(), v.end())); }

AttributeVector bits_from_json(const json& j, const AttributeNames& names, const char* field) {
  if (!j.is_array() || j.size() != names.size())
    throw RequestError(400, std::string(field) + " must be an array of " + std::to_string(names.size()) + " bits");
  std::vector<std::uint8_t> bits;
  for (const auto& b : j) {
    if (!b.is_number_integer() || (b.get<int>() != 0 && b.get<int>() != 1))
      throw RequestError(400, std::string(field) + " entries must be 0 or 1");
    bits.push_back(static_cast<std::uint8_t>(b.get<int>()));
  }
  return AttributeVector(std::move(bits), names);
}

torch::Tensor load_upload(std::string_view bytes, std::int64_t resolution) {
  if (bytes.empty()) throw RequestError(400, "image payload is empty");
  torch::Tensor raw;
  try {
    raw = decode_image(bytes);
  } catch (const Error& e) {
    throw RequestError(400, std::string("cannot decode image: ") + e.what());
  }
  return preprocess_any(raw, resolution);
}

json attention_payload(const AttentionRendering& r) {
  json maps = json::array();
  for (const auto& o : r.overlays) {
    json entry{{"attribute", o.attribute}, {"branch", to_string(o.branch)}, {"available", o.map.has_value()}};
    entry["map"] = o.map ? json(base64_encode(encode_gray_png(*o.map))) : json(nullptr);
    maps.push_back(std::move(entry));
  }
  return maps;
}

}  // namespace

std::shared_ptr<const EditService::State> EditService::make_state(LoadedModels models,
                                                                  std::optional<EvalClassifier> classifier) {
  auto state = std::make_shared<State>();
  state->names = models.config.attributes;
  state->resolution = models.config.resolution;
  if (classifier) {
    if (classifier->names() != state->names)
      throw ConfigError("classifier attributes do not match the checkpoint's attribute list");
    if (classifier->resolution() != state->resolution)
      throw ConfigError("classifier resolution does not match the checkpoint");
  }
  models.generator->eval();
  models.discriminator->eval();
  state->models = std::move(models);
  state->classifier = std::move(classifier);
  return state;
}

EditService::EditService(LoadedModels models, std::optional<EvalClassifier> classifier)
    : state_(make_state(std::move(models), std::move(classifier))) {}

std::unique_ptr<EditService> EditService::open(const std::filesystem::path& checkpoint,
                                               const std::optional<std::filesystem::path>& classifier) {
  std::optional<EvalClassifier> c;
  if (classifier) c = EvalClassifier::load(*classifier);
  return std::make_unique<EditService>(load_models(checkpoint), std::move(c));
}

void EditService::reload(LoadedModels models, std::optional<EvalClassifier> classifier) {
  auto next = make_state(std::move(models), std::move(classifier));
  std::unique_lock lock(mutex_);
  state_ = std::move(next);
}

json EditService::attributes() const {
  std::shared_lock lock(mutex_);
  return {{"attributes", state_->names},
          {"resolution", state_->resolution},
          {"complementary", state_->models.discriminator->has_complementary()},
          {"classifier", state_->classifier.has_value()}};
}

json EditService::edit(std::string_view image_bytes, const json& request) const {
  std::shared_lock lock(mutex_);
  const auto& s = *state_;
  if (!request.is_object()) throw RequestError(400, "request body must be a JSON object");
  const bool has_toggles = request.contains("toggles"), has_bits = request.contains("target_bits");
  if (has_toggles == has_bits) throw RequestError(400, "give exactly one of toggles or target_bits");

  auto x = load_upload(image_bytes, s.resolution);
  AttributeVector source;
  if (request.contains("source_bits")) {
    source = bits_from_json(request["source_bits"], s.names, "source_bits");
  } else if (s.classifier) {
    source = s.classifier->estimate(x);
  } else {
    throw RequestError(400, "no classifier is loaded to estimate source attributes; send source_bits");
  }

  AttributeVector target = source;
  if (has_bits) {
    target = bits_from_json(request["target_bits"], s.names, "target_bits");
  } else {
    const auto& toggles = request["toggles"];
    if (!toggles.is_object()) throw RequestError(400, "toggles must map attribute names to 0 or 1");
    for (const auto& [name, value] : toggles.items()) {
      std::size_t index;
      try {
        index = attribute_index(s.names, name);
      } catch (const LookupError& e) {
        throw RequestError(400, e.what());
      }
      if (!value.is_number_integer() || (value.get<int>() != 0 && value.get<int>() != 1))
        throw RequestError(400, "toggle for '" + name + "' must be 0 or 1");
      target = target.with(index, static_cast<std::uint8_t>(value.get<int>()));
    }
  }

  Generator generator = s.models.generator;
  torch::Tensor edited;
  {
    torch::NoGradGuard no_grad;
    edited = generator->edit(x, source.to_tensor(), target.to_tensor());
  }
  auto diff = difference_tensor(target.to_tensor(), source.to_tensor()).to(torch::kInt64);
  std::vector<int> vd(diff.data_ptr<std::int64_t>(), diff.data_ptr<std::int64_t>() + diff.numel());

  json out{{"attributes", s.names},
           {"v_s", bits_json(source.values())},
           {"v_t", bits_json(target.values())},
           {"v_d", vd},
           {"source_estimated", !request.contains("source_bits")},
           {"image", base64_encode(encode_png(edited[0]))}};
  if (request.value("include_attention", false)) {
    Discriminator d = s.models.discriminator;
    out["attention"] = attention_payload(render_attention_maps(d, x, s.names));
  }
  return out;
}

json EditService::attention(std::string_view image_bytes) const {
  std::shared_lock lock(mutex_);
  const auto& s = *state_;
  auto x = load_upload(image_bytes, s.resolution);
  Discriminator d = s.models.discriminator;
  return {{"attributes", s.names},
          {"complementary", d->has_complementary()},
          {"maps", attention_payload(render_attention_maps(d, x, s.names))}};
}

struct HttpServer::Impl {
  EditService& service;
  httplib::Server server;
};

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", {{"status", status}, {"message", message}}}});
}

// Image bytes and request document from either a multipart form or a JSON body.
std::pair<std::string, json> read_upload(const httplib::Request& req) {
  if (req.is_multipart_form_data()) {
    if (!req.has_file("image")) throw RequestError(400, "multipart field 'image' is missing");
    json doc = json::object();
    if (req.has_file("request")) {
      try {
        doc = json::parse(req.get_file_value("request").content);
      } catch (const json::exception& e) {
        throw RequestError(400, std::string("request field is not valid JSON: ") + e.what());
      }
    }
    return {req.get_file_value("image").content, doc};
  }
  json doc;
  try {
    doc = json::parse(req.body);
  } catch (const json::exception& e) {
    throw RequestError(400, std::string("body is neither multipart nor valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("image") || !doc["image"].is_string())
    throw RequestError(400, "JSON body needs a base64 'image' field");
  std::string bytes;
  try {
    bytes = base64_decode(doc["image"].get<std::string>());
  } catch (const ParseError& e) {
    throw RequestError(400, e.what());
  }
  doc.erase("image");
  return {bytes, doc};
}

template <typename F>
void guarded(httplib::Response& res, F&& body) {
  try {
    body();
  } catch (const RequestError& e) {
    send_error(res, e.status(), e.what());
  } catch (const ParseError& e) {
    send_error(res, 400, e.what());
  } catch (const LookupError& e) {
    send_error(res, 400, e.what());
  } catch (const DomainError& e) {
    send_error(res, 400, e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, std::string("inference failed: ") + e.what());
  }
}

}  // namespace

HttpServer::HttpServer(EditService& service) : impl_(new Impl{service, {}}) {
  auto& srv = impl_->server;
  auto& svc = impl_->service;
  srv.Get("/healthz", [](const httplib::Request&, httplib::Response& res) { send_json(res, 200, {{"status", "ok"}}); });
  srv.Get("/attributes", [&svc](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, svc.attributes()); });
  });
  srv.Post("/edit", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto [image, doc] = read_upload(req);
      send_json(res, 200, svc.edit(image, doc));
    });
  });
  srv.Post("/attention", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto [image, doc] = read_upload(req);
      send_json(res, 200, svc.attention(image));
    });
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool HttpServer::listen_after_bind() { return impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

bool HttpServer::is_running() const { return impl_->server.is_running(); }

}  // namespace faceedit
