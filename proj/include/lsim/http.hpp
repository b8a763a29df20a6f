#pragma once

#include <string>

#include <httplib.h>

#include "lsim/common.hpp"

namespace lsim {

struct ParsedUrl {
  std::string host;
  int port = 80;
  std::string path = "/";
};

/// Accepts plain-http URLs of the form http://host[:port][/path].
inline ParsedUrl parse_http_url(const std::string& url) {
  const std::string scheme = "http://";
  if (url.rfind("https://", 0) == 0) {
    throw RemoteError("https endpoints require a TLS-enabled build: " + url);
  }
  if (url.rfind(scheme, 0) != 0) {
    throw RemoteError("endpoint must start with http://: " + url);
  }
  ParsedUrl parsed;
  const std::string rest = url.substr(scheme.size());
  const std::size_t slash = rest.find('/');
  std::string authority = slash == std::string::npos ? rest : rest.substr(0, slash);
  if (slash != std::string::npos) {
    parsed.path = rest.substr(slash);
  }
  const std::size_t colon = authority.find(':');
  if (colon != std::string::npos) {
    parsed.host = authority.substr(0, colon);
    try {
      parsed.port = std::stoi(authority.substr(colon + 1));
    } catch (const std::exception&) {
      throw RemoteError("invalid port in endpoint: " + url);
    }
  } else {
    parsed.host = authority;
  }
  if (parsed.host.empty()) {
    throw RemoteError("missing host in endpoint: " + url);
  }
  return parsed;
}

/// POSTs a JSON payload and returns the parsed JSON response body.
/// Non-200 statuses and unreachable endpoints raise RemoteError.
inline Json post_json(const std::string& endpoint, const Json& payload,
                      const std::string& api_key = "",
                      int timeout_seconds = 30) {
  const ParsedUrl url = parse_http_url(endpoint);
  httplib::Client client(url.host, url.port);
  client.set_connection_timeout(timeout_seconds, 0);
  client.set_read_timeout(timeout_seconds, 0);
  httplib::Headers headers;
  if (!api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + api_key);
  }
  const auto result =
      client.Post(url.path, headers, payload.dump(), "application/json");
  if (!result) {
    throw RemoteError("endpoint unreachable: " + endpoint + " (" +
                      httplib::to_string(result.error()) + ")");
  }
  if (result->status != 200) {
    throw RemoteError("endpoint returned status " +
                      std::to_string(result->status) + ": " + endpoint);
  }
  try {
    return Json::parse(result->body);
  } catch (const Json::parse_error& e) {
    throw RemoteError("endpoint returned invalid JSON: " + endpoint + " (" +
                      e.what() + ")");
  }
}

}  // namespace lsim
