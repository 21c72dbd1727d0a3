#include "fatlens/mlcore.hpp"

#include <regex>

#include "fatlens/common.hpp"
#include "fatlens/rng.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"
#include "json.hpp"

namespace fatlens::ml {

std::string pair_prompt(std::string_view note1, std::string_view note2) {
  std::string p;
  p += "Note 1: ";
  p += note1;
  p += " \n\n\nNote 2: ";
  p += note2;
  p += " \n\n\nTask:\n"
       "Analyze the above two physician notes and assess \n"
       "which one appears to be written by a more fatigued physician. \n"
       "Answer the question at the end by selecting either [Note 1] or [Note 2].\n"
       "Only reply the answer.\n"
       "Do not include any other information.";
  return p;
}

int parse_pair_reply(std::string_view reply) {
  static const std::regex re(R"(note\s*\[?\s*([12]))", std::regex::icase);
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_search(reply.begin(), reply.end(), m, re)) return 0;
  return m[1].str() == "1" ? 1 : 2;
}

std::string http_chat_completion(const LlmEndpoint& endpoint, const std::string& prompt) {
  static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)", std::regex::icase);
  std::smatch m;
  if (!std::regex_match(endpoint.url, m, url_re))
    fail(ErrorKind::config, "LLM endpoint must be an http(s) URL: " + endpoint.url);
  const std::string base = m[1].str();
  const std::string path = m[2].matched ? m[2].str() : "/";

  nlohmann::json body;
  body["model"] = endpoint.model;
  body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", prompt}}});
  body["temperature"] = 0;
  const std::string payload = body.dump();

  httplib::Client client(base);
  const auto secs = static_cast<time_t>(endpoint.timeout_seconds);
  const auto usecs = static_cast<time_t>((endpoint.timeout_seconds - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!endpoint.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint.api_key);

  std::string last_error;
  for (int attempt = 0; attempt <= std::max(0, endpoint.retries); ++attempt) {
    auto res = client.Post(path, headers, payload, "application/json");
    if (!res) {
      last_error = "request failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP status " + std::to_string(res->status);
      continue;
    }
    try {
      const auto j = nlohmann::json::parse(res->body);
      const auto& choice = j.at("choices").at(0);
      if (choice.contains("message")) return choice.at("message").at("content").get<std::string>();
      return choice.at("text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      last_error = std::string("unexpected response body: ") + e.what();
    }
  }
  fail(ErrorKind::network, last_error);
}

LlmBaselineReport llm_pairwise_baseline(const std::vector<NotePair>& pairs,
                                        const LlmEndpoint& endpoint, std::uint64_t seed,
                                        const ChatTransport& transport) {
  if (pairs.empty()) fail(ErrorKind::invalid_argument, "no note pairs supplied");
  Rng rng(seed);
  LlmBaselineReport rep;
  rep.pairs = pairs.size();
  std::vector<double> note_scores;
  std::vector<int> note_labels;
  double correct = 0.0;
  std::size_t answered = 0;
  for (const auto& pair : pairs) {
    LlmPairResult r;
    r.fatigued_first = rng.bernoulli(0.5);
    const std::string& first = r.fatigued_first ? pair.fatigued_text : pair.rested_text;
    const std::string& second = r.fatigued_first ? pair.rested_text : pair.fatigued_text;
    try {
      r.reply = transport(endpoint, pair_prompt(first, second));
    } catch (const std::exception& e) {
      r.failed = true;
      r.error = e.what();
      ++rep.failures;
      rep.results.push_back(std::move(r));
      continue;
    }
    r.answer = parse_pair_reply(r.reply);
    if (r.answer == 0) {
      r.score = 0.5;
      ++rep.abstentions;
    } else {
      const bool picked_first = r.answer == 1;
      r.score = picked_first == r.fatigued_first ? 1.0 : 0.0;
    }
    correct += r.score;
    ++answered;
    note_scores.push_back(r.score);
    note_labels.push_back(1);
    note_scores.push_back(1.0 - r.score);
    note_labels.push_back(0);
    rep.results.push_back(std::move(r));
  }
  if (answered == 0) fail(ErrorKind::network, "every LLM request failed");
  rep.accuracy = correct / static_cast<double>(answered);
  rep.auc_roc = auc_roc(note_scores, note_labels);
  return rep;
}

}  // namespace fatlens::ml
