#pragma once

#include <string>
#include <string_view>

namespace memrec {

struct HttpTarget {
    std::string origin;  // scheme://host[:port]
    std::string path_prefix;
};

// Splits "http://host:8000/prefix" into origin and prefix (no trailing '/').
HttpTarget parse_endpoint(std::string_view endpoint);

// POSTs a JSON body and returns the response body. Transport errors and
// non-2xx statuses throw Error(LlmUnavailable).
std::string post_json(const std::string& endpoint, const std::string& path, const std::string& body,
                      const std::string& api_key, int timeout_seconds);

}  // namespace memrec
