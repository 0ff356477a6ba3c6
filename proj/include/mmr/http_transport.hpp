#pragma once

// Live transport for judge_client. Only translation units that talk to a real
// endpoint include this; they must link OpenSSL for https URLs.

#include <string>

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include "httplib.h"

#include "judge_client.hpp"

namespace mmr {

struct split_url {
    std::string origin; // scheme://host[:port]
    std::string path;
};

[[nodiscard]] inline split_url split_origin(const std::string& url)
{
    auto scheme = url.find("://");
    if (scheme == std::string::npos) {
        throw config_error("judge url must start with http:// or https://");
    }
    auto slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) {
        return {url, "/"};
    }
    return {url.substr(0, slash), url.substr(slash)};
}

class httplib_transport final : public http_transport_interface {
  public:
    http_response post(const http_request& req) override
    {
        auto parts = split_origin(req.url);
        httplib::Client client(parts.origin);
        auto secs = std::chrono::duration_cast<std::chrono::seconds>(req.timeout);
        auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(req.timeout - secs);
        client.set_connection_timeout(secs.count(), usecs.count());
        client.set_read_timeout(secs.count(), usecs.count());
        client.set_write_timeout(secs.count(), usecs.count());
        httplib::Headers headers;
        std::string content_type = "application/json";
        for (const auto& [k, v] : req.headers) {
            if (k == "Content-Type") {
                content_type = v;
            } else {
                headers.emplace(k, v);
            }
        }
        auto res = client.Post(parts.path, headers, req.body, content_type);
        if (!res) {
            throw network_error("request to " + parts.origin + " failed: " + httplib::to_string(res.error()));
        }
        return {res->status, res->body};
    }
};

} // namespace mmr
