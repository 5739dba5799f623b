#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dataprov/matrix.hpp"
#include "dataprov/mlp.hpp"

namespace dataprov::blackbox {

enum class PredictMode { kLabels, kLogits };

std::string_view to_string(PredictMode mode) noexcept;
PredictMode parse_mode(std::string_view name);

struct PredictRequest {
  Matrix inputs;  // one feature vector per row
  PredictMode mode = PredictMode::kLabels;
};

struct PredictResponse {
  std::vector<std::uint32_t> labels;
  std::optional<Matrix> logits;  // present iff the request asked for logits

  friend bool operator==(const PredictResponse&, const PredictResponse&) = default;
};

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  std::chrono::milliseconds timeout{10000};

  /// Parses "host:port".
  static Endpoint parse(std::string_view address);
  std::string address() const;
};

// Wire format of POST /predict:
//   request  {"inputs": [[f, ...], ...], "mode": "labels" | "logits"}
//   response {"labels": [c, ...], "logits": [[z, ...], ...]}   (logits only in logits mode)
//   error    {"error": {"code": "...", "message": "..."}} with a 4xx/5xx status
// Reals are written with 17 significant digits so they round-trip exactly.
std::string encode_request(const PredictRequest& request);
PredictRequest decode_request(std::string_view body);
std::string encode_response(const PredictResponse& response);
PredictResponse decode_response(std::string_view body);
std::string encode_error(std::string_view code, std::string_view message);

/// What a server answers for `request`. Throws on dimension mismatch.
PredictResponse answer(const learner::MlpClassifier& model, const PredictRequest& request);

// The verifier only ever sees a suspect through this interface.
class PredictionService {
 public:
  virtual ~PredictionService() = default;
  virtual PredictResponse predict(const PredictRequest& request) = 0;
  // How many requests the client may keep outstanding at once.
  virtual std::size_t max_in_flight() const { return 1; }
};

class InProcessService final : public PredictionService {
 public:
  explicit InProcessService(std::shared_ptr<const learner::MlpClassifier> model);

  PredictResponse predict(const PredictRequest& request) override;

 private:
  std::shared_ptr<const learner::MlpClassifier> model_;
};

class HttpPredictionService final : public PredictionService {
 public:
  explicit HttpPredictionService(Endpoint endpoint, std::size_t max_in_flight = 4);

  PredictResponse predict(const PredictRequest& request) override;
  std::size_t max_in_flight() const override { return max_in_flight_; }
  const Endpoint& endpoint() const noexcept { return endpoint_; }

 private:
  Endpoint endpoint_;
  std::size_t max_in_flight_;
};

// Serves one classifier on POST /predict from a background thread until
// destroyed or stopped. Port 0 binds an ephemeral port.
class PredictServer {
 public:
  PredictServer(std::shared_ptr<const learner::MlpClassifier> model, std::string host = "127.0.0.1",
                std::uint16_t port = 0);
  ~PredictServer();
  PredictServer(const PredictServer&) = delete;
  PredictServer& operator=(const PredictServer&) = delete;

  std::uint16_t port() const noexcept { return port_; }
  Endpoint endpoint() const;
  void stop();
  void wait();  // blocks until the listener exits

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::string host_;
  std::uint16_t port_ = 0;
};

struct BatchRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const noexcept { return end - begin; }
};

/// Consecutive slices of [0, n); the last one may be short.
std::vector<BatchRange> batch_ranges(std::size_t n, std::size_t batch_size);

struct QueryOptions {
  std::size_t max_retries = 3;
};

/// Sends `features` batch by batch and returns the responses in batch order,
/// whatever order the transport completes them in. A batch whose request
/// keeps failing with a transport error after the retries raises
/// QueryFailedError carrying its index.
std::vector<PredictResponse> query_batches(PredictionService& service, const Matrix& features,
                                           std::size_t batch_size, PredictMode mode,
                                           const QueryOptions& options = {});

/// Labels of all batches joined in order.
std::vector<std::uint32_t> concat_labels(const std::vector<PredictResponse>& responses);

}  // namespace dataprov::blackbox
