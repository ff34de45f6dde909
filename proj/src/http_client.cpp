#include "memrec/http_client.hpp"

#include "memrec/error.hpp"

#include <httplib.h>

namespace memrec {

HttpTarget parse_endpoint(std::string_view endpoint) {
    HttpTarget t;
    auto scheme_end = endpoint.find("://");
    std::size_t host_start = scheme_end == std::string_view::npos ? 0 : scheme_end + 3;
    auto path_start = endpoint.find('/', host_start);
    if (path_start == std::string_view::npos) {
        t.origin = std::string(endpoint);
    } else {
        t.origin = std::string(endpoint.substr(0, path_start));
        t.path_prefix = std::string(endpoint.substr(path_start));
        while (!t.path_prefix.empty() && t.path_prefix.back() == '/') t.path_prefix.pop_back();
    }
    if (scheme_end == std::string_view::npos) t.origin = "http://" + t.origin;
    return t;
}

std::string post_json(const std::string& endpoint, const std::string& path, const std::string& body,
                      const std::string& api_key, int timeout_seconds) {
    auto target = parse_endpoint(endpoint);
    httplib::Client client(target.origin);
    client.set_connection_timeout(timeout_seconds, 0);
    client.set_read_timeout(timeout_seconds, 0);
    client.set_write_timeout(timeout_seconds, 0);
    httplib::Headers headers;
    if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
    auto res = client.Post(target.path_prefix + path, headers, body, "application/json");
    if (!res) {
        throw Error(ErrorKind::LlmUnavailable, "request to " + target.origin + " failed: " + httplib::to_string(res.error()));
    }
    if (res->status < 200 || res->status >= 300) {
        throw Error(ErrorKind::LlmUnavailable, "HTTP " + std::to_string(res->status) + " from " + target.origin, res->body);
    }
    return res->body;
}

}  // namespace memrec
