#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace entrofact {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// x*log(x) with the convention 0*log(0) = 0.
inline double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid arguments, violated preconditions.
struct InvalidArgument : Error {
  using Error::Error;
};

// State-space larger than the configured enumeration cap.
struct CapExceeded : Error {
  using Error::Error;
};

[[noreturn]] inline void fail(const std::string& msg) { throw InvalidArgument(msg); }

inline void require(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

}  // namespace entrofact
