#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "stc/core/types.hpp"

namespace stc::backends {

// Raised when a backend response violates a type invariant or the wire
// schema. Invalid responses never reach the pipeline.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when transport retries are exhausted (connection-level failures).
class BackendUnreachable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised by the fixture source in strict mode when a request digest has no
// scripted response.
class MissingFixture : public std::runtime_error {
 public:
  MissingFixture(const std::string& kind, const std::string& digest)
      : std::runtime_error("missing fixture for " + kind + " request " + digest),
        kind_(kind),
        digest_(digest) {}
  const std::string& kind() const { return kind_; }
  const std::string& digest() const { return digest_; }

 private:
  std::string kind_;
  std::string digest_;
};

struct CompletionRequest {
  std::string prompt;
  int max_tokens = 16;
  std::vector<std::string> stop;
  bool want_logprobs = true;
  double temperature = 0;  // 0 keeps engine behavior reproducible
};

struct CaptionRequest {
  std::string image_ref;
  std::optional<BoundingBox> region;  // absent = caption the whole image
  std::optional<std::string> guidance;
  int num_candidates = 1;
};

struct DetectionResult {
  std::vector<ConceptCandidate> objects;
  int vocabulary_size = 0;  // informational
  double image_width = 0;
  double image_height = 0;
};

struct EmbeddingVector {
  std::vector<double> values;
  int dim() const { return static_cast<int>(values.size()); }
};

// One scripted or cached backend response, keyed by request digest.
struct FixtureRecord {
  std::string request_digest;
  std::string kind;
  nlohmann::json response;
};

// Request kinds; also the endpoint suffixes of the HTTP protocol
// (POST <base>/v1/<kind>).
inline constexpr const char* kKindComplete = "complete";
inline constexpr const char* kKindDetect = "detect";
inline constexpr const char* kKindCaption = "caption";
inline constexpr const char* kKindSimilarity = "similarity";
inline constexpr const char* kKindEmbed = "embed";

// Canonical request payloads (wire bodies; see docs/protocol.md).
nlohmann::json completion_request_json(const CompletionRequest& req);
nlohmann::json detect_request_json(const std::string& image_ref);
nlohmann::json caption_request_json(const CaptionRequest& req);
nlohmann::json similarity_request_json(const std::string& image_ref,
                                       const std::string& text);
nlohmann::json embed_request_json(const std::string& text);

// Response parsing + invariant validation. Throws ValidationError.
Completion parse_completion_response(const nlohmann::json& body,
                                     const CompletionRequest& req);
DetectionResult parse_detection_response(const nlohmann::json& body);
std::vector<std::string> parse_caption_response(const nlohmann::json& body,
                                                const CaptionRequest& req);
double parse_similarity_response(const nlohmann::json& body);
EmbeddingVector parse_embedding_response(const nlohmann::json& body);

// Builds a validated Completion from raw wire fields (also used by the
// fixture corpus builder so both sides share the same arithmetic).
Completion finalize_completion(std::string text, std::vector<std::string> tokens,
                               std::vector<double> token_logprobs,
                               bool want_logprobs);

double cosine_similarity(const std::vector<double>& a,
                         const std::vector<double>& b);

struct BackendCounters {
  std::atomic<std::uint64_t> complete{0};
  std::atomic<std::uint64_t> detect{0};
  std::atomic<std::uint64_t> caption{0};
  std::atomic<std::uint64_t> similarity{0};
  std::atomic<std::uint64_t> embed{0};

  std::uint64_t total() const {
    return complete + detect + caption + similarity + embed;
  }
  void reset() { complete = detect = caption = similarity = embed = 0; }
  void count(const std::string& kind);
};

// Transport: maps a canonical request to a raw response body. Fixture files,
// the response cache and the HTTP clients all sit behind this interface, so
// validation and typed parsing happen in exactly one place above it.
class ResponseSource {
 public:
  virtual ~ResponseSource() = default;
  virtual nlohmann::json fetch(const std::string& kind,
                               const nlohmann::json& canonical_request) = 0;
};

// Capability interfaces consumed by the pipeline. Implementations must be
// safe for concurrent calls from multiple episode workers.
class CompletionBackend {
 public:
  virtual ~CompletionBackend() = default;
  virtual Completion complete(const CompletionRequest& req) = 0;
};

class DetectionBackend {
 public:
  virtual ~DetectionBackend() = default;
  virtual DetectionResult detect(const std::string& image_ref) = 0;
};

class CaptionBackend {
 public:
  virtual ~CaptionBackend() = default;
  virtual std::vector<std::string> caption(const CaptionRequest& req) = 0;
};

class SimilarityBackend {
 public:
  virtual ~SimilarityBackend() = default;
  virtual double cross_modal_similarity(const std::string& image_ref,
                                        const std::string& text) = 0;
};

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual EmbeddingVector embed_text(const std::string& text) = 0;
};

struct Backends {
  std::shared_ptr<CompletionBackend> completer;
  std::shared_ptr<DetectionBackend> detector;
  std::shared_ptr<CaptionBackend> captioner;
  std::shared_ptr<SimilarityBackend> similarity;
  std::shared_ptr<EmbeddingBackend> embedder;

  // Throws std::invalid_argument naming the missing capabilities.
  void require_all() const;
};

// Adapts a ResponseSource to all five capability interfaces.
class SourceBackends : public CompletionBackend,
                       public DetectionBackend,
                       public CaptionBackend,
                       public SimilarityBackend,
                       public EmbeddingBackend {
 public:
  explicit SourceBackends(std::shared_ptr<ResponseSource> source)
      : source_(std::move(source)) {}

  Completion complete(const CompletionRequest& req) override;
  DetectionResult detect(const std::string& image_ref) override;
  std::vector<std::string> caption(const CaptionRequest& req) override;
  double cross_modal_similarity(const std::string& image_ref,
                                const std::string& text) override;
  EmbeddingVector embed_text(const std::string& text) override;

 private:
  std::shared_ptr<ResponseSource> source_;
};

Backends make_backends(std::shared_ptr<ResponseSource> source);

}  // namespace stc::backends
