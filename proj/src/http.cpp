#include "bikesite/http.hpp"

#include <cctype>
#include <thread>

#include <httplib.h>

#include "bikesite/errors.hpp"

namespace bikesite {
namespace {

bool retryable(int status) { return status == 0 || status == 429 || (status >= 502 && status <= 504); }

// Splits "https://host:port/path?q" into ("https://host:port", "/path?q").
std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw NetworkError("invalid URL '" + url + "'");
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

HttpTransport default_http_transport(std::chrono::seconds timeout) {
  return [timeout](const HttpRequest& req) {
    const auto [origin, path] = split_url(req.url);
    httplib::Client client(origin);
    client.set_connection_timeout(std::chrono::seconds(30));
    client.set_read_timeout(timeout);
    client.set_follow_location(true);
    client.set_default_headers({{"User-Agent", "bikesite/1.0"}});
    httplib::Result res = req.method == "POST"
                              ? client.Post(path, req.body, req.content_type)
                              : client.Get(path);
    HttpResponse out;
    if (!res) {
      out.error = httplib::to_string(res.error());
      return out;
    }
    out.status = res->status;
    out.body = res->body;
    return out;
  };
}

HttpResponse request_with_retry(const HttpTransport& transport, const HttpRequest& request,
                                const RetryPolicy& policy) {
  auto backoff = policy.initial_backoff;
  HttpResponse last;
  for (int attempt = 1; attempt <= std::max(1, policy.max_attempts); ++attempt) {
    last = transport(request);
    if (last.status >= 200 && last.status < 300) return last;
    if (!retryable(last.status)) {
      throw NetworkError("HTTP " + std::to_string(last.status) + " from " + request.url);
    }
    if (attempt == policy.max_attempts) break;
    if (policy.sleep) {
      policy.sleep(backoff);
    } else {
      std::this_thread::sleep_for(backoff);
    }
    backoff = std::chrono::milliseconds(
        static_cast<std::int64_t>(static_cast<double>(backoff.count()) * policy.multiplier));
  }
  throw NetworkError("giving up on " + request.url + " after " +
                     std::to_string(policy.max_attempts) + " attempts (last status " +
                     std::to_string(last.status) + (last.error.empty() ? "" : ", " + last.error) +
                     ")");
}

std::string form_encode(const std::string& value) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : value) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out += static_cast<char>(c);
    } else if (c == ' ') {
      out += '+';
    } else {
      out += '%';
      out += kHex[c >> 4];
      out += kHex[c & 0xF];
    }
  }
  return out;
}

}  // namespace bikesite
