#include "dataprov/blackbox.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <future>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "dataprov/error.hpp"
#include "dataprov/format.hpp"

namespace dataprov::blackbox {
namespace {

using nlohmann::json;

void append_real(std::string& out, double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  out.append(buf, static_cast<std::size_t>(n));
}

void append_matrix(std::string& out, const Matrix& m) {
  out += '[';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    if (r > 0) out += ',';
    out += '[';
    const auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c > 0) out += ',';
      append_real(out, row[c]);
    }
    out += ']';
  }
  out += ']';
}

Matrix matrix_from_json(const json& rows, const char* field) {
  if (!rows.is_array() || rows.empty()) {
    throw Error(ErrorCode::kParse, std::string("'") + field + "' must be a non-empty array of arrays");
  }
  const auto& first = rows.front();
  if (!first.is_array() || first.empty()) {
    throw Error(ErrorCode::kParse, std::string("'") + field + "' rows must be non-empty arrays");
  }
  Matrix m(rows.size(), first.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (!row.is_array() || row.size() != m.cols()) {
      throw Error(ErrorCode::kDimensionMismatch,
                  std::string("'") + field + "' rows have differing lengths (row " + std::to_string(r) + ")");
    }
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (!row[c].is_number()) throw Error(ErrorCode::kParse, std::string("'") + field + "' holds a non-number");
      m(r, c) = row[c].get<double>();
    }
  }
  return m;
}

json parse_json(std::string_view body) {
  json doc = json::parse(body.begin(), body.end(), nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::kParse, "body is not valid JSON");
  if (!doc.is_object()) throw Error(ErrorCode::kParse, "body must be a JSON object");
  return doc;
}

std::string_view wire_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParse: return "invalid_request";
    case ErrorCode::kDimensionMismatch: return "dimension_mismatch";
    case ErrorCode::kEmptyInput: return "empty_input";
    case ErrorCode::kNumericalOverflow: return "numerical_overflow";
    default: return "internal";
  }
}

}  // namespace

std::string_view to_string(PredictMode mode) noexcept {
  return mode == PredictMode::kLabels ? "labels" : "logits";
}

PredictMode parse_mode(std::string_view name) {
  if (name == "labels") return PredictMode::kLabels;
  if (name == "logits") return PredictMode::kLogits;
  throw Error(ErrorCode::kParse, "mode must be \"labels\" or \"logits\", got \"" + std::string(name) + "\"");
}

Endpoint Endpoint::parse(std::string_view address) {
  const auto colon = address.rfind(':');
  if (colon == std::string_view::npos || colon == 0 || colon + 1 == address.size()) {
    throw Error(ErrorCode::kInvalidConfig, "endpoint must look like host:port, got '" + std::string(address) + "'");
  }
  long long port = 0;
  try {
    port = parse_integer(address.substr(colon + 1));
  } catch (const Error&) {
    throw Error(ErrorCode::kInvalidConfig, "bad port in endpoint '" + std::string(address) + "'");
  }
  if (port < 1 || port > 65535) {
    throw Error(ErrorCode::kInvalidConfig, "port out of range in endpoint '" + std::string(address) + "'");
  }
  Endpoint e;
  e.host = std::string(address.substr(0, colon));
  e.port = static_cast<std::uint16_t>(port);
  return e;
}

std::string Endpoint::address() const { return host + ":" + std::to_string(port); }

std::string encode_request(const PredictRequest& request) {
  std::string out = "{\"inputs\":";
  append_matrix(out, request.inputs);
  out += ",\"mode\":\"";
  out += to_string(request.mode);
  out += "\"}";
  return out;
}

PredictRequest decode_request(std::string_view body) {
  const json doc = parse_json(body);
  if (!doc.contains("inputs")) throw Error(ErrorCode::kParse, "missing 'inputs'");
  PredictRequest request;
  request.inputs = matrix_from_json(doc["inputs"], "inputs");
  if (doc.contains("mode")) {
    if (!doc["mode"].is_string()) throw Error(ErrorCode::kParse, "'mode' must be a string");
    request.mode = parse_mode(doc["mode"].get<std::string>());
  }
  for (double v : request.inputs.values()) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kParse, "inputs must be finite");
  }
  return request;
}

std::string encode_response(const PredictResponse& response) {
  std::string out = "{\"labels\":[";
  for (std::size_t i = 0; i < response.labels.size(); ++i) {
    if (i > 0) out += ',';
    out += std::to_string(response.labels[i]);
  }
  out += ']';
  if (response.logits) {
    out += ",\"logits\":";
    append_matrix(out, *response.logits);
  }
  out += '}';
  return out;
}

PredictResponse decode_response(std::string_view body) {
  const json doc = parse_json(body);
  if (doc.contains("error")) {
    const auto& err = doc["error"];
    throw Error(ErrorCode::kQueryFailed, "server error " + err.value("code", std::string("?")) + ": " +
                                             err.value("message", std::string()));
  }
  if (!doc.contains("labels") || !doc["labels"].is_array()) {
    throw Error(ErrorCode::kParse, "response lacks a 'labels' array");
  }
  PredictResponse response;
  for (const auto& v : doc["labels"]) {
    if (!v.is_number_unsigned()) throw Error(ErrorCode::kParse, "labels must be non-negative integers");
    response.labels.push_back(v.get<std::uint32_t>());
  }
  if (doc.contains("logits")) {
    response.logits = matrix_from_json(doc["logits"], "logits");
    if (response.logits->rows() != response.labels.size()) {
      throw Error(ErrorCode::kParse, "logits and labels differ in length");
    }
  }
  return response;
}

std::string encode_error(std::string_view code, std::string_view message) {
  return json{{"error", {{"code", code}, {"message", message}}}}.dump();
}

PredictResponse answer(const learner::MlpClassifier& model, const PredictRequest& request) {
  if (request.inputs.rows() == 0) throw Error(ErrorCode::kEmptyInput, "no inputs");
  Matrix logits = learner::predict_logits(model, request.inputs);
  for (double z : logits.values()) {
    if (!std::isfinite(z)) throw Error(ErrorCode::kNumericalOverflow, "model produced a non-finite logit");
  }
  PredictResponse response;
  response.labels = learner::argmax_rows(logits);
  if (request.mode == PredictMode::kLogits) response.logits = std::move(logits);
  return response;
}

InProcessService::InProcessService(std::shared_ptr<const learner::MlpClassifier> model)
    : model_(std::move(model)) {
  if (!model_) throw Error(ErrorCode::kInvalidConfig, "in-process service needs a model");
}

PredictResponse InProcessService::predict(const PredictRequest& request) { return answer(*model_, request); }

HttpPredictionService::HttpPredictionService(Endpoint endpoint, std::size_t max_in_flight)
    : endpoint_(std::move(endpoint)), max_in_flight_(max_in_flight == 0 ? 1 : max_in_flight) {}

PredictResponse HttpPredictionService::predict(const PredictRequest& request) {
  httplib::Client client(endpoint_.host, endpoint_.port);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(endpoint_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(endpoint_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  auto result = client.Post("/predict", encode_request(request), "application/json");
  if (!result) {
    throw Error(ErrorCode::kTransport, "POST " + endpoint_.address() + "/predict failed: " +
                                           httplib::to_string(result.error()));
  }
  if (result->status >= 500) {
    throw Error(ErrorCode::kTransport, "server returned status " + std::to_string(result->status));
  }
  if (result->status != 200) {
    // Client-side mistakes will not improve on retry.
    std::string detail = result->body;
    try {
      decode_response(result->body);
    } catch (const Error& e) {
      detail = e.what();
    }
    throw Error(ErrorCode::kQueryFailed, "status " + std::to_string(result->status) + ": " + detail);
  }
  PredictResponse response = decode_response(result->body);
  if (response.labels.size() != request.inputs.rows()) {
    throw Error(ErrorCode::kParse, "response label count does not match the request");
  }
  if (request.mode == PredictMode::kLogits && !response.logits) {
    throw Error(ErrorCode::kParse, "logits requested but not returned");
  }
  return response;
}

struct PredictServer::Impl {
  httplib::Server server;
  std::thread listener;
  std::atomic<bool> listener_done{false};
};

PredictServer::PredictServer(std::shared_ptr<const learner::MlpClassifier> model, std::string host,
                             std::uint16_t port)
    : impl_(std::make_unique<Impl>()), host_(std::move(host)) {
  if (!model) throw Error(ErrorCode::kInvalidConfig, "server needs a model");
  auto& server = impl_->server;
  server.new_task_queue = [] { return new httplib::ThreadPool(4); };

  server.Post("/predict", [model](const httplib::Request& req, httplib::Response& res) {
    try {
      const PredictRequest request = decode_request(req.body);
      res.set_content(encode_response(answer(*model, request)), "application/json");
    } catch (const Error& e) {
      const bool server_side = e.code() == ErrorCode::kNumericalOverflow;
      res.status = server_side ? 500 : 400;
      res.set_content(encode_error(wire_code(e.code()), e.what()), "application/json");
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(encode_error("internal", e.what()), "application/json");
    }
  });
  server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
    const std::string code = res.status == 404 ? "not_found" : "bad_request";
    res.set_content(encode_error(code, req.method + " " + req.path + " is not served"), "application/json");
    return httplib::Server::HandlerResponse::Handled;
  });

  if (port == 0) {
    const int bound = server.bind_to_any_port(host_);
    if (bound <= 0) throw Error(ErrorCode::kTransport, "cannot bind an ephemeral port on " + host_);
    port_ = static_cast<std::uint16_t>(bound);
  } else {
    if (!server.bind_to_port(host_, port)) {
      throw Error(ErrorCode::kTransport, "cannot bind " + host_ + ":" + std::to_string(port));
    }
    port_ = port;
  }
  impl_->listener = std::thread([this] {
    impl_->server.listen_after_bind();
    impl_->listener_done = true;
  });
  // httplib ignores stop() until the accept loop runs, so do not hand out
  // the server before that.
  while (!impl_->server.is_running() && !impl_->listener_done) {
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
}

PredictServer::~PredictServer() {
  stop();
  wait();
}

Endpoint PredictServer::endpoint() const {
  Endpoint e;
  e.host = host_;
  e.port = port_;
  return e;
}

void PredictServer::stop() { impl_->server.stop(); }

void PredictServer::wait() {
  if (impl_->listener.joinable()) impl_->listener.join();
}

std::vector<BatchRange> batch_ranges(std::size_t n, std::size_t batch_size) {
  if (batch_size == 0) throw Error(ErrorCode::kInvalidConfig, "batch size must be at least 1");
  std::vector<BatchRange> ranges;
  for (std::size_t begin = 0; begin < n; begin += batch_size) {
    ranges.push_back({begin, std::min(n, begin + batch_size)});
  }
  return ranges;
}

std::vector<PredictResponse> query_batches(PredictionService& service, const Matrix& features,
                                           std::size_t batch_size, PredictMode mode,
                                           const QueryOptions& options) {
  const auto ranges = batch_ranges(features.rows(), batch_size);

  auto run_batch = [&](std::size_t index) {
    const BatchRange range = ranges[index];
    PredictRequest request;
    request.mode = mode;
    request.inputs = Matrix(range.size(), features.cols());
    for (std::size_t r = 0; r < range.size(); ++r) {
      const auto src = features.row(range.begin + r);
      std::copy(src.begin(), src.end(), request.inputs.row(r).begin());
    }
    std::string last_error;
    for (std::size_t attempt = 0; attempt <= options.max_retries; ++attempt) {
      try {
        PredictResponse response = service.predict(request);
        if (response.labels.size() != range.size()) {
          throw QueryFailedError(index, "response has " + std::to_string(response.labels.size()) +
                                            " labels for " + std::to_string(range.size()) + " inputs");
        }
        return response;
      } catch (const QueryFailedError&) {
        throw;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kTransport) throw QueryFailedError(index, e.what());
        last_error = e.what();
      }
    }
    throw QueryFailedError(index, "gave up after " + std::to_string(options.max_retries) +
                                      " retries: " + last_error);
  };

  std::vector<PredictResponse> responses;
  responses.reserve(ranges.size());
  const std::size_t window = std::max<std::size_t>(1, service.max_in_flight());
  if (window == 1) {
    for (std::size_t i = 0; i < ranges.size(); ++i) responses.push_back(run_batch(i));
    return responses;
  }

  // Keep up to `window` batches outstanding; collect strictly from the front.
  std::deque<std::future<PredictResponse>> pending;
  std::size_t next = 0;
  try {
    while (responses.size() < ranges.size()) {
      while (next < ranges.size() && pending.size() < window) {
        pending.push_back(std::async(std::launch::async, run_batch, next++));
      }
      responses.push_back(pending.front().get());
      pending.pop_front();
    }
  } catch (...) {
    for (auto& f : pending) f.wait();
    throw;
  }
  return responses;
}

std::vector<std::uint32_t> concat_labels(const std::vector<PredictResponse>& responses) {
  std::vector<std::uint32_t> labels;
  for (const auto& r : responses) labels.insert(labels.end(), r.labels.begin(), r.labels.end());
  return labels;
}

}  // namespace dataprov::blackbox
