#pragma once

#include <stdexcept>
#include <string>

namespace equiflux {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// -- mesh ----------------------------------------------------------------
struct NonConforming : Error {
  using Error::Error;
};
struct DegenerateElement : Error {
  using Error::Error;
};
struct UnlabeledBoundaryFacet : Error {
  using Error::Error;
};
struct RefinementOverflow : Error {
  using Error::Error;
};

// -- quadrature / integration ---------------------------------------------
struct UnsupportedDegree : Error {
  using Error::Error;
};
struct MaxDepthExceeded : Error {
  using Error::Error;
};

// -- linear algebra / fem --------------------------------------------------
struct EmptySystem : Error {
  using Error::Error;
};
struct NoConvergence : Error {
  NoConvergence(const std::string& what, double res) : Error(what), residual(res) {}
  double residual;
};

// -- flux reconstruction ----------------------------------------------------
struct SingularPrimalBlock : Error {
  using Error::Error;
};
struct MissingPatch : Error {
  using Error::Error;
};

// -- estimator ----------------------------------------------------------
struct MissingConstants : Error {
  using Error::Error;
};
struct ZeroKappaTraceConstant : Error {
  using Error::Error;
};

// -- problems --------------------------------------------------------------
struct MissingExactSolution : Error {
  using Error::Error;
};
struct ZeroError : Error {
  using Error::Error;
};

// -- runner/io ------------------------------------------------------------
struct ConfigParse : Error {
  ConfigParse(const std::string& what, int line_no) : Error(what), line(line_no) {}
  int line;
};
struct ProblemNotFound : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};

}  // namespace equiflux
