#pragma once

#include <chrono>
#include <functional>
#include <string>

namespace bikesite {

struct HttpRequest {
  std::string url;
  std::string method = "GET";
  std::string body;
  std::string content_type;
};

struct HttpResponse {
  /// 0 when no response was received.
  int status = 0;
  std::string body;
  std::string error;
};

using HttpTransport = std::function<HttpResponse(const HttpRequest&)>;

/// cpp-httplib backed transport (http and https URLs).
HttpTransport default_http_transport(std::chrono::seconds timeout = std::chrono::seconds(300));

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds initial_backoff{2000};
  double multiplier = 2.0;
  /// Replaced in tests to avoid real sleeping.
  std::function<void(std::chrono::milliseconds)> sleep;
};

/// Sends the request, retrying rate-limit (429), gateway (502-504) and
/// connection failures with exponential backoff. Throws NetworkError once
/// attempts are exhausted or on any other non-2xx status.
HttpResponse request_with_retry(const HttpTransport& transport, const HttpRequest& request,
                                const RetryPolicy& policy);

/// Percent-encodes a string for application/x-www-form-urlencoded bodies.
std::string form_encode(const std::string& value);

}  // namespace bikesite
