#include "promptecho/adapter.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>

#include "promptecho/errors.hpp"
#include "promptecho/templates.hpp"

namespace promptecho {

namespace {
constexpr char kB64Chars[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::span<const uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (size_t i = 0; i < bytes.size(); i += 3) {
    uint32_t chunk = static_cast<uint32_t>(bytes[i]) << 16;
    size_t remain = bytes.size() - i;
    if (remain > 1) chunk |= static_cast<uint32_t>(bytes[i + 1]) << 8;
    if (remain > 2) chunk |= bytes[i + 2];
    out += kB64Chars[(chunk >> 18) & 0x3f];
    out += kB64Chars[(chunk >> 12) & 0x3f];
    out += remain > 1 ? kB64Chars[(chunk >> 6) & 0x3f] : '=';
    out += remain > 2 ? kB64Chars[chunk & 0x3f] : '=';
  }
  return out;
}

std::vector<uint8_t> base64_decode(const std::string& text) {
  auto value_of = [](char c) -> int {
    const char* p = std::strchr(kB64Chars, c);
    if (!p || c == '\0') return -1;
    return static_cast<int>(p - kB64Chars);
  };
  if (text.size() % 4 != 0) throw ConfigError("base64 input length not a multiple of 4");
  std::vector<uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (size_t i = 0; i < text.size(); i += 4) {
    int vals[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      char c = text[i + static_cast<size_t>(k)];
      if (c == '=') {
        vals[k] = 0;
        ++pad;
      } else {
        vals[k] = value_of(c);
        if (vals[k] < 0 || pad > 0) throw ConfigError("invalid base64 character");
      }
    }
    uint32_t chunk = (static_cast<uint32_t>(vals[0]) << 18) |
                     (static_cast<uint32_t>(vals[1]) << 12) |
                     (static_cast<uint32_t>(vals[2]) << 6) | static_cast<uint32_t>(vals[3]);
    out.push_back(static_cast<uint8_t>((chunk >> 16) & 0xff));
    if (pad < 2) out.push_back(static_cast<uint8_t>((chunk >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<uint8_t>(chunk & 0xff));
  }
  return out;
}

nlohmann::json TcpTransport::roundtrip(const nlohmann::json& request) const {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(host_.c_str(), std::to_string(port_).c_str(), &hints, &res) != 0 || !res)
    throw BackendUnavailable("cannot resolve adapter endpoint " + host_);
  int fd = socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0 || connect(fd, res->ai_addr, res->ai_addrlen) != 0) {
    freeaddrinfo(res);
    if (fd >= 0) close(fd);
    throw BackendUnavailable("cannot connect to adapter at " + host_ + ":" +
                             std::to_string(port_));
  }
  freeaddrinfo(res);

  std::string line = request.dump();
  line += '\n';
  size_t sent = 0;
  while (sent < line.size()) {
    ssize_t n = send(fd, line.data() + sent, line.size() - sent, 0);
    if (n <= 0) {
      close(fd);
      throw BackendUnavailable("adapter send failed");
    }
    sent += static_cast<size_t>(n);
  }

  std::string reply;
  char buf[4096];
  while (true) {
    ssize_t n = recv(fd, buf, sizeof(buf), 0);
    if (n <= 0) break;
    reply.append(buf, static_cast<size_t>(n));
    if (reply.find('\n') != std::string::npos) break;
  }
  close(fd);
  size_t eol = reply.find('\n');
  if (eol == std::string::npos) throw BackendUnavailable("adapter closed without a response line");
  nlohmann::json parsed = nlohmann::json::parse(reply.substr(0, eol), nullptr, false);
  if (parsed.is_discarded()) throw BackendUnavailable("adapter response is not valid JSON");
  return parsed;
}

ExternalBackend::ExternalBackend(std::shared_ptr<Transport> transport,
                                 ExternalBackendOptions options)
    : transport_(std::move(transport)), options_(std::move(options)) {
  if (options_.ocr_query_override.empty()) options_.ocr_query_override = ocr_reward_template();
  caps_.name = "external:" + options_.model_name + "+" + options_.template_tag;
  // The remote model is frozen and queried without sampling, so teacher
  // forcing is declared deterministic; the declaration is the remote
  // side's contract, not something we can verify locally.
  caps_.deterministic_teacher_forcing = true;
  caps_.max_label_len = options_.max_label_len;
  caps_.fidelity = 1.0;
}

std::string ExternalBackend::query_text(const TokenSeq& query) const {
  if (!options_.caption_query_override.empty() && query.ids == caption_query().ids)
    return options_.caption_query_override;
  if (query.ids == ocr_query().ids) return options_.ocr_query_override;
  return Vocabulary::builtin().detokenize(query);
}

nlohmann::json ExternalBackend::call(const nlohmann::json& request) const {
  if (!transport_) throw BackendUnavailable("external backend has no configured endpoint");
  return transport_->roundtrip(request);
}

std::vector<double> ExternalBackend::teacher_forced_logprobs(const Image& image,
                                                             const TokenSeq& query,
                                                             const TokenSeq& label) const {
  if (label.empty()) throw EmptyPrompt("teacher forcing requires a non-empty label");
  if (static_cast<int>(label.size()) > caps_.max_label_len)
    throw LabelTooLong("label exceeds adapter max_label_len");
  nlohmann::json request{{"op", "tf_logprobs"},
                         {"image", base64_encode(encode_png(image))},
                         {"query", query_text(query)},
                         {"label", Vocabulary::builtin().detokenize(label)}};
  nlohmann::json reply = call(request);
  if (!reply.contains("logprobs") || !reply["logprobs"].is_array() || reply["logprobs"].empty())
    throw BackendUnavailable("adapter reply lacks a logprobs array");
  std::vector<double> out;
  for (const auto& v : reply["logprobs"]) {
    if (!v.is_number()) throw BackendUnavailable("adapter logprobs must be numbers");
    double lp = v.get<double>();
    if (lp > 0.0) throw BackendUnavailable("adapter returned a positive log-probability");
    out.push_back(lp);
  }
  return out;
}

TokenSeq ExternalBackend::generate(const Image& image, const TokenSeq& query, int max_tokens,
                                   double temperature, uint64_t seed) const {
  nlohmann::json request{{"op", "generate"},
                         {"image", base64_encode(encode_png(image))},
                         {"query", query_text(query)},
                         {"max_tokens", max_tokens},
                         {"temperature", temperature},
                         {"seed", seed}};
  nlohmann::json reply = call(request);
  if (!reply.contains("text") || !reply["text"].is_string())
    throw BackendUnavailable("adapter reply lacks generated text");
  return Vocabulary::builtin().tokenize(reply["text"].get<std::string>());
}

ExternalJudge::ExternalJudge(std::shared_ptr<Transport> transport, double temperature)
    : transport_(std::move(transport)), temperature_(temperature) {}

AdapterVerdict ExternalJudge::judge(const TokenSeq& prompt, const Image& first,
                                    const Image& second) const {
  if (!transport_) throw BackendUnavailable("external judge has no configured endpoint");
  std::string prompt_text = Vocabulary::builtin().detokenize(prompt);
  nlohmann::json request{{"op", "judge"},
                         {"template", fill_template(judge_pairwise_template(), prompt_text)},
                         {"prompt", prompt_text},
                         {"image_a", base64_encode(encode_png(first))},
                         {"image_b", base64_encode(encode_png(second))},
                         {"temperature", temperature_}};
  nlohmann::json reply = transport_->roundtrip(request);
  if (!reply.is_object() || !reply.contains("preference") || !reply["preference"].is_string())
    throw VerdictParseError("judge reply lacks a preference field");
  std::string pref = reply["preference"].get<std::string>();
  AdapterVerdict v;
  if (pref == "image_a") v.pick = AdapterVerdict::Pick::kFirst;
  else if (pref == "image_b") v.pick = AdapterVerdict::Pick::kSecond;
  else if (pref == "tie") v.pick = AdapterVerdict::Pick::kTie;
  else throw VerdictParseError("judge preference must be image_a, image_b or tie, got: " + pref);
  if (reply.contains("reasoning") && reply["reasoning"].is_string())
    v.reasoning = reply["reasoning"].get<std::string>();
  return v;
}

ExternalExtractor::ExternalExtractor(std::shared_ptr<Transport> transport)
    : transport_(std::move(transport)) {}

TextLabel ExternalExtractor::extract(const std::string& instruction) const {
  if (!transport_) throw BackendUnavailable("external extractor has no configured endpoint");
  nlohmann::json request{{"op", "extract_label"},
                         {"template", fill_template(label_extraction_template(), instruction)},
                         {"instruction", instruction}};
  nlohmann::json reply = transport_->roundtrip(request);
  if (!reply.is_object()) throw LabelParseError("extractor did not return a JSON object");
  return label_from_json(reply.dump());
}

}  // namespace promptecho
