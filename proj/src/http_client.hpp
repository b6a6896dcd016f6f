#pragma once

#include <chrono>
#include <string>
#include <utility>
#include <vector>

namespace qw::detail {

struct HttpResponse {
    int status = 0;
    std::string body;
};

// POSTs a JSON body to base_url + path. base_url may carry a path prefix
// ("https://host/v1"). Throws Error(backend_failure) on transport errors.
HttpResponse post_json(const std::string& base_url, const std::string& path, const std::string& body,
                       const std::vector<std::pair<std::string, std::string>>& headers,
                       std::chrono::seconds timeout);

}  // namespace qw::detail
