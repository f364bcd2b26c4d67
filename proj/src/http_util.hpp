#pragma once

#include <string>
#include <string_view>

#include "uqgate/error.hpp"

namespace uqgate::detail {

struct UrlParts {
  std::string origin;     // scheme://host[:port]
  std::string base_path;  // no trailing slash; may be empty
};

inline UrlParts split_url(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) {
    fail(ErrorCode::ConfigError, "endpoint '" + std::string(url) + "' lacks a scheme");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  UrlParts parts;
  parts.origin = std::string(url.substr(0, path_start));
  if (path_start != std::string_view::npos) {
    parts.base_path = std::string(url.substr(path_start));
    while (!parts.base_path.empty() && parts.base_path.back() == '/') parts.base_path.pop_back();
  }
  return parts;
}

}  // namespace uqgate::detail
