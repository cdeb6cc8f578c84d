#pragma once

#include <stdexcept>
#include <string>

namespace skl {

enum class Errc {
  file_not_found,
  unsupported_format,
  corrupt_stream,
  invalid_argument,
  shape_mismatch,
  out_of_range,
  checksum_mismatch,
  non_finite,
  stale_cache,
  io_failure,
};

const char* to_string(Errc code) noexcept;

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI exit-code mapping) can dispatch without parsing text.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace skl
