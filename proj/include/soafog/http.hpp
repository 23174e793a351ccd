#pragma once

#include "json.hpp"

#include <map>
#include <optional>
#include <string>

namespace soafog {

// Transport-neutral request/response pair. The HTTP servers and the network
// simulator both drive the tier handlers through these.
struct HttpRequest {
    std::string method = "GET";
    std::string path;
    std::map<std::string, std::string> query;
    std::map<std::string, std::string> headers; // lower-case names
    std::string body;

    std::optional<std::string> param(const std::string& name) const {
        auto it = query.find(name);
        if (it == query.end()) return std::nullopt;
        return it->second;
    }
    std::optional<std::string> header(const std::string& name) const {
        auto it = headers.find(name);
        if (it == headers.end()) return std::nullopt;
        return it->second;
    }
};

struct HttpResponse {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;

    static HttpResponse json(int status, const nlohmann::json& body) {
        return {status, "application/json", body.dump()};
    }
};

/// Bytes a request would occupy on the wire (request line, headers, body).
std::size_t wire_size(const HttpRequest& req);
std::size_t wire_size(const HttpResponse& resp);

/// Splits "path?a=1&b=2" into a request; values are percent-decoded.
HttpRequest make_request(const std::string& method, const std::string& target, std::string body = {});

std::string url_decode(const std::string& text);

} // namespace soafog
