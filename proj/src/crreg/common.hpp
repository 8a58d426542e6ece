#pragma once

#include <stdexcept>
#include <string>

namespace crreg {

enum class Status {
  ok = 0,
  invalid_argument,
  format_error,
  unsupported_datatype,
  dimensionality_error,
  truncated_file,
  io_error,
  constant_target,
  no_overlap,
  no_admissible_patches,
  singular_matrix,
  generation_failed,
  internal_error,
};

class Error : public std::runtime_error {
public:
  Error(Status s, const std::string& msg) : std::runtime_error(msg), status_(s) {}
  Status status() const noexcept { return status_; }

private:
  Status status_;
};

[[noreturn]] inline void fail(Status s, const std::string& msg) { throw Error(s, msg); }

// Global cap on worker threads used by warp/metric evaluations.
// 0 means "use hardware concurrency". Results are identical for any value.
void set_max_threads(int n);
int max_threads();

}  // namespace crreg
