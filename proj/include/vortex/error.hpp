#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vortex {

enum class errc {
  invalid_argument,
  validation,
  parse,
  inadmissible_regime,
  overflow,
  line_search_failure,
  max_iters_exceeded,
  endpoint_not_negative,
  barrier_absent,
  shooting_failure,
  io,
};

inline std::string_view to_string(errc c) {
  switch (c) {
    case errc::invalid_argument: return "invalid-argument";
    case errc::validation: return "validation-error";
    case errc::parse: return "parse-error";
    case errc::inadmissible_regime: return "inadmissible-regime";
    case errc::overflow: return "overflow";
    case errc::line_search_failure: return "line-search-failure";
    case errc::max_iters_exceeded: return "max-iters-exceeded";
    case errc::endpoint_not_negative: return "endpoint-not-negative";
    case errc::barrier_absent: return "barrier-absent";
    case errc::shooting_failure: return "shooting-failure";
    case errc::io: return "io-error";
  }
  return "unknown";
}

class error : public std::runtime_error {
 public:
  error(errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

}  // namespace vortex
