#pragma once

#include <string>
#include <string_view>

#include "obqa/retriever.hpp"

namespace obqa {

// Semantic-search service reached over HTTP.
//   request:  POST <path>  {"query": string, "k": int}
//   response: {"results": [{"doc_id": string, "score": number}, ...]}
struct RemoteEndpoint {
  std::string url;  // scheme://host:port, e.g. "http://127.0.0.1:8080"
  std::string path = "/search";
  int timeout_ms = 5000;
};

// Throws TransportError on connection failure, timeout, non-2xx status or a
// malformed body. An empty "results" array is a valid, empty ranking.
RankedList remote_retrieve(const RemoteEndpoint& endpoint, std::string_view query,
                           std::size_t k);

// Exposed for tests of the wire format.
std::string make_remote_request_body(std::string_view query, std::size_t k);
RankedList parse_remote_response(std::string_view query, std::string_view body,
                                 std::size_t k);

}  // namespace obqa
