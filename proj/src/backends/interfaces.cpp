#include "stc/backends/interfaces.hpp"

#include <cmath>

namespace stc::backends {

using nlohmann::json;

json completion_request_json(const CompletionRequest& req) {
  return json{{"prompt", req.prompt},
              {"max_tokens", req.max_tokens},
              {"stop", req.stop},
              {"logprobs", req.want_logprobs},
              {"temperature", req.temperature}};
}

json detect_request_json(const std::string& image_ref) {
  return json{{"image_ref", image_ref}};
}

json caption_request_json(const CaptionRequest& req) {
  json body{{"image_ref", req.image_ref}, {"n", req.num_candidates}};
  if (req.region) {
    body["bbox"] = {req.region->x_min, req.region->y_min, req.region->x_max,
                    req.region->y_max};
  }
  if (req.guidance) body["guidance"] = *req.guidance;
  return body;
}

json similarity_request_json(const std::string& image_ref,
                             const std::string& text) {
  return json{{"image_ref", image_ref}, {"text", text}};
}

json embed_request_json(const std::string& text) {
  return json{{"text", text}};
}

namespace {

const json& require_field(const json& body, const char* name) {
  auto it = body.find(name);
  if (it == body.end())
    throw ValidationError(std::string("response missing field '") + name + "'");
  return *it;
}

BoundingBox parse_bbox_array(const json& arr) {
  if (!arr.is_array() || arr.size() != 4)
    throw ValidationError("bbox must be an array [x0,y0,x1,y1]");
  BoundingBox box{arr[0].get<double>(), arr[1].get<double>(),
                  arr[2].get<double>(), arr[3].get<double>()};
  if (!box.valid()) throw ValidationError("bbox is degenerate");
  return box;
}

}  // namespace

Completion finalize_completion(std::string text, std::vector<std::string> tokens,
                               std::vector<double> token_logprobs,
                               bool want_logprobs) {
  Completion c;
  c.text = std::move(text);
  c.tokens = std::move(tokens);
  c.token_logprobs = std::move(token_logprobs);
  if (want_logprobs) {
    if (c.tokens.size() != c.token_logprobs.size())
      throw ValidationError("completion: token/logprob count mismatch");
    for (double lp : c.token_logprobs) {
      if (!(lp <= 0) || std::isnan(lp))
        throw ValidationError("completion: token logprob must be <= 0");
    }
    double total = 0;
    for (double lp : c.token_logprobs) total += lp;
    c.total_logprob = total;
    c.mean_logprob =
        total / static_cast<double>(std::max<std::size_t>(1, c.tokens.size()));
  } else {
    c.tokens.clear();
    c.token_logprobs.clear();
  }
  return c;
}

Completion parse_completion_response(const json& body,
                                     const CompletionRequest& req) {
  std::string text = require_field(body, "text").get<std::string>();
  for (const auto& stop : req.stop) {
    if (!stop.empty() && text.find(stop) != std::string::npos)
      throw ValidationError("completion text contains stop string");
  }
  std::vector<std::string> tokens;
  std::vector<double> logprobs;
  if (req.want_logprobs) {
    tokens = require_field(body, "tokens").get<std::vector<std::string>>();
    logprobs =
        require_field(body, "token_logprobs").get<std::vector<double>>();
  }
  return finalize_completion(std::move(text), std::move(tokens),
                             std::move(logprobs), req.want_logprobs);
}

DetectionResult parse_detection_response(const json& body) {
  DetectionResult result;
  for (const auto& obj : require_field(body, "objects")) {
    ConceptCandidate c;
    c.label = require_field(obj, "label").get<std::string>();
    if (c.label.empty()) throw ValidationError("detection: empty label");
    c.bbox = parse_bbox_array(require_field(obj, "bbox"));
    c.score = require_field(obj, "score").get<double>();
    if (!(c.score >= 0 && c.score <= 1))
      throw ValidationError("detection: score outside [0,1]");
    result.objects.push_back(std::move(c));
  }
  result.vocabulary_size = body.value("vocabulary_size", 0);
  if (auto it = body.find("image_size"); it != body.end()) {
    if (!it->is_array() || it->size() != 2)
      throw ValidationError("detection: image_size must be [w,h]");
    result.image_width = (*it)[0].get<double>();
    result.image_height = (*it)[1].get<double>();
    if (result.image_width <= 0 || result.image_height <= 0)
      throw ValidationError("detection: image_size must be positive");
  }
  return result;
}

std::vector<std::string> parse_caption_response(const json& body,
                                                const CaptionRequest& req) {
  auto captions =
      require_field(body, "captions").get<std::vector<std::string>>();
  if (captions.empty()) throw ValidationError("caption: empty candidate list");
  if (static_cast<int>(captions.size()) != req.num_candidates)
    throw ValidationError("caption: candidate count does not match request");
  return captions;
}

double parse_similarity_response(const json& body) {
  double score = require_field(body, "score").get<double>();
  if (!(score >= -1.0 && score <= 1.0))
    throw ValidationError("similarity: score outside [-1,1]");
  return score;
}

EmbeddingVector parse_embedding_response(const json& body) {
  EmbeddingVector v;
  v.values = require_field(body, "vector").get<std::vector<double>>();
  if (v.values.empty()) throw ValidationError("embed: empty vector");
  return v;
}

double cosine_similarity(const std::vector<double>& a,
                         const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("cosine_similarity: dimension mismatch");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0)
    throw std::invalid_argument("cosine_similarity: zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

void BackendCounters::count(const std::string& kind) {
  if (kind == kKindComplete)
    ++complete;
  else if (kind == kKindDetect)
    ++detect;
  else if (kind == kKindCaption)
    ++caption;
  else if (kind == kKindSimilarity)
    ++similarity;
  else if (kind == kKindEmbed)
    ++embed;
}

void Backends::require_all() const {
  std::string missing;
  auto check = [&](const void* p, const char* name) {
    if (!p) {
      if (!missing.empty()) missing += ", ";
      missing += name;
    }
  };
  check(completer.get(), kKindComplete);
  check(detector.get(), kKindDetect);
  check(captioner.get(), kKindCaption);
  check(similarity.get(), kKindSimilarity);
  check(embedder.get(), kKindEmbed);
  if (!missing.empty())
    throw std::invalid_argument("backends missing capabilities: " + missing);
}

Completion SourceBackends::complete(const CompletionRequest& req) {
  if (req.prompt.empty())
    throw std::invalid_argument("complete: prompt must be non-empty");
  if (req.max_tokens < 1)
    throw std::invalid_argument("complete: max_tokens must be >= 1");
  auto body = source_->fetch(kKindComplete, completion_request_json(req));
  return parse_completion_response(body, req);
}

DetectionResult SourceBackends::detect(const std::string& image_ref) {
  auto body = source_->fetch(kKindDetect, detect_request_json(image_ref));
  return parse_detection_response(body);
}

std::vector<std::string> SourceBackends::caption(const CaptionRequest& req) {
  if (req.num_candidates < 1)
    throw std::invalid_argument("caption: num_candidates must be >= 1");
  if (req.region && !req.region->valid())
    throw std::invalid_argument("caption: degenerate region");
  auto body = source_->fetch(kKindCaption, caption_request_json(req));
  return parse_caption_response(body, req);
}

double SourceBackends::cross_modal_similarity(const std::string& image_ref,
                                              const std::string& text) {
  if (text.empty())
    throw std::invalid_argument("similarity: text must be non-empty");
  auto body =
      source_->fetch(kKindSimilarity, similarity_request_json(image_ref, text));
  return parse_similarity_response(body);
}

EmbeddingVector SourceBackends::embed_text(const std::string& text) {
  if (text.empty())
    throw std::invalid_argument("embed: text must be non-empty");
  auto body = source_->fetch(kKindEmbed, embed_request_json(text));
  return parse_embedding_response(body);
}

Backends make_backends(std::shared_ptr<ResponseSource> source) {
  auto impl = std::make_shared<SourceBackends>(std::move(source));
  Backends b;
  b.completer = impl;
  b.detector = impl;
  b.captioner = impl;
  b.similarity = impl;
  b.embedder = impl;
  return b;
}

}  // namespace stc::backends
