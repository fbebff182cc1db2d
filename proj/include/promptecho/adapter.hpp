#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "promptecho/backend.hpp"
#include "promptecho/judge.hpp"
#include "promptecho/textrender.hpp"

namespace promptecho {

// Wire protocol to external pretrained models: one newline-delimited JSON
// request, one newline-delimited JSON response. Requests carry an "op"
// ("tf_logprobs" | "generate" | "judge" | "extract_label"), images travel
// as base64 PNG. The external side owns its own tokenizer and chat
// template; the adapter records the template choice in its backend name.
// None of this participates in acceptance runs; the oracle backend does.

std::string base64_encode(std::span<const uint8_t> bytes);
std::vector<uint8_t> base64_decode(const std::string& text);  // throws ConfigError

/// One request/response exchange.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual nlohmann::json roundtrip(const nlohmann::json& request) const = 0;
};

/// In-process transport, mainly for tests and local experimentation.
class FnTransport : public Transport {
 public:
  explicit FnTransport(std::function<nlohmann::json(const nlohmann::json&)> fn)
      : fn_(std::move(fn)) {}
  nlohmann::json roundtrip(const nlohmann::json& request) const override { return fn_(request); }

 private:
  std::function<nlohmann::json(const nlohmann::json&)> fn_;
};

/// Line-delimited JSON over a TCP socket; connects per request.
/// Throws BackendUnavailable on connection or I/O failure.
class TcpTransport : public Transport {
 public:
  TcpTransport(std::string host, int port) : host_(std::move(host)), port_(port) {}
  nlohmann::json roundtrip(const nlohmann::json& request) const override;

 private:
  std::string host_;
  int port_;
};

struct ExternalBackendOptions {
  std::string model_name = "unconfigured";
  int max_label_len = 4096;
  // Real models need real prompt text: the desk-vocabulary caption/OCR
  // queries are mapped to these strings on the wire. Defaults are the
  // canonical captioning query and the versioned OCR recognition template;
  // the tag below names the template choice and is recorded in the
  // backend caps name, since corpus/reward consistency is keyed on it.
  std::string caption_query_override = "Describe this image in detail.";
  std::string ocr_query_override;  // empty = the shipped OCR template
  std::string template_tag = "templates-v1";
};

/// Adapter to an external pretrained captioning model. Excluded from
/// acceptance; the protocol itself is covered by unit tests against an
/// in-process transport.
class ExternalBackend : public VlmBackend {
 public:
  ExternalBackend(std::shared_ptr<Transport> transport, ExternalBackendOptions options);

  const BackendCaps& caps() const override { return caps_; }
  const Vocabulary& vocab() const override { return Vocabulary::builtin(); }

  std::vector<double> teacher_forced_logprobs(const Image& image, const TokenSeq& query,
                                              const TokenSeq& label) const override;
  TokenSeq generate(const Image& image, const TokenSeq& query, int max_tokens, double temperature,
                    uint64_t seed) const override;

 private:
  std::string query_text(const TokenSeq& query) const;
  nlohmann::json call(const nlohmann::json& request) const;

  std::shared_ptr<Transport> transport_;
  ExternalBackendOptions options_;
  BackendCaps caps_;
};

/// External LLM judge stub: fills the pairwise template verbatim and
/// parses the strict-JSON verdict. Temperature defaults to 0.3.
class ExternalJudge : public JudgeAdapter {
 public:
  ExternalJudge(std::shared_ptr<Transport> transport, double temperature = 0.3);

  AdapterVerdict judge(const TokenSeq& prompt, const Image& first,
                       const Image& second) const override;

 private:
  std::shared_ptr<Transport> transport_;
  double temperature_;
};

/// External LLM label extractor stub: fills the extraction template and
/// parses the JSON label; throws LabelParseError on malformed output.
class ExternalExtractor : public LabelExtractor {
 public:
  explicit ExternalExtractor(std::shared_ptr<Transport> transport);

  TextLabel extract(const std::string& instruction) const override;

 private:
  std::shared_ptr<Transport> transport_;
};

}  // namespace promptecho
