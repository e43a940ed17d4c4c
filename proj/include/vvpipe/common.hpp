#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace vvpipe {

// Feature rows are kept in 32-bit precision (the on-disk format); model
// parameters and encodings are kept in 64-bit.
using MatrixF = Eigen::MatrixXf;
using MatrixD = Eigen::MatrixXd;
using VectorD = Eigen::VectorXd;

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// File system / read / write failures.
struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(msg) {}
};

// Malformed files: bad magic, truncation, unparsable manifest lines.
struct FormatError : Error {
  explicit FormatError(const std::string& msg) : Error(msg) {}
};

// Shape disagreements between data and a declared layout or model.
struct DimensionError : Error {
  explicit DimensionError(const std::string& msg) : Error(msg) {}
};

struct InvalidArgument : Error {
  explicit InvalidArgument(const std::string& msg) : Error(msg) {}
};

// Inputs that are structurally valid but numerically unusable
// (rank-deficient data, identical histograms, collapsed mixture weights).
struct DegenerateInput : Error {
  explicit DegenerateInput(const std::string& msg) : Error(msg) {}
};

}  // namespace vvpipe
