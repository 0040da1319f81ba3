#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace bpinn {

/// Training allocates multi-megabyte Eigen temporaries every iteration; with
/// glibc defaults those go through mmap/munmap and the kernel re-zeroes the
/// pages each time (roughly 40% of a training run ends up as system time).
/// Raising the mmap threshold keeps the blocks on the heap for reuse. Call
/// once at program start; a no-op on non-glibc platforms.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

/// Precondition violations: bad shapes, bad architectures, inconsistent sets.
struct InvalidInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Non-finite values encountered during evaluation or optimization.
struct NumericalFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Requested feature needs problem data (e.g. exact solution) that is absent.
struct UnsupportedProblem : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Formats a double with 17 significant digits (round-trip exact).
inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << content;
  if (!out) throw IoError("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace bpinn
