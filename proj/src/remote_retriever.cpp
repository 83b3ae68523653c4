#include "obqa/remote_retriever.hpp"

#include <httplib.h>
#include <json.hpp>

#include "obqa/common.hpp"

namespace obqa {

using json = nlohmann::json;

std::string make_remote_request_body(std::string_view query, std::size_t k) {
  return json{{"query", std::string(query)}, {"k", k}}.dump();
}

RankedList parse_remote_response(std::string_view query, std::string_view body,
                                 std::size_t k) {
  using Kind = TransportError::Kind;
  json doc = json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded()) throw TransportError(Kind::kMalformedBody, "response is not JSON");
  if (!doc.is_object() || !doc.contains("results") || !doc["results"].is_array()) {
    throw TransportError(Kind::kMalformedBody, "response lacks a \"results\" array");
  }
  RankedList list;
  list.query = std::string(query);
  std::size_t i = 0;
  for (const auto& item : doc["results"]) {
    if (!item.is_object() || !item.contains("doc_id") || !item["doc_id"].is_string() ||
        !item.contains("score") || !item["score"].is_number()) {
      throw TransportError(Kind::kMalformedBody,
                           "results[" + std::to_string(i) + "] needs doc_id and score");
    }
    list.entries.push_back({item["doc_id"].get<std::string>(), item["score"].get<double>()});
    ++i;
  }
  normalize_ranking(list, k);
  return list;
}

RankedList remote_retrieve(const RemoteEndpoint& endpoint, std::string_view query,
                           std::size_t k) {
  using Kind = TransportError::Kind;
  if (k == 0) throw ConfigError("remote_retrieve: k must be at least 1");
  httplib::Client client(endpoint.url);
  const auto sec = endpoint.timeout_ms / 1000;
  const auto usec = (endpoint.timeout_ms % 1000) * 1000;
  client.set_connection_timeout(sec, usec);
  client.set_read_timeout(sec, usec);
  client.set_write_timeout(sec, usec);
  auto res = client.Post(endpoint.path, make_remote_request_body(query, k), "application/json");
  if (!res) {
    const auto err = res.error();
    const std::string what = "remote retriever " + endpoint.url + endpoint.path + ": " +
                             httplib::to_string(err);
    if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
        err == httplib::Error::Write) {
      throw TransportError(Kind::kTimeout, what);
    }
    throw TransportError(Kind::kConnection, what);
  }
  if (res->status < 200 || res->status >= 300) {
    throw TransportError(Kind::kHttpStatus,
                         "remote retriever returned HTTP " + std::to_string(res->status),
                         res->status);
  }
  return parse_remote_response(query, res->body, k);
}

}  // namespace obqa
