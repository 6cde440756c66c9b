#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace subrift {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Error hierarchy shared by all modules. Every failure mode surfaced to the
// CLI maps to one of these.
struct SubriftError : std::runtime_error {
  explicit SubriftError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ModelEvaluationError : SubriftError {
  int field_index = -1;
  ModelEvaluationError(const std::string& msg, int idx)
      : SubriftError(msg), field_index(idx) {}
};

struct NonFiniteError : SubriftError {
  using SubriftError::SubriftError;
};

// Trajectory left the configured phase-space bound (numeric stand-in for a
// finite escape time of the flow).
struct FlowEscapeError : SubriftError {
  using SubriftError::SubriftError;
};

struct LinearizationError : SubriftError {
  using SubriftError::SubriftError;
};

struct NoConvergenceError : SubriftError {
  using SubriftError::SubriftError;
};

struct RankDeficiencyError : SubriftError {
  using SubriftError::SubriftError;
};

struct CutLocusError : SubriftError {
  using SubriftError::SubriftError;
};

struct SingularJ1Error : SubriftError {
  using SubriftError::SubriftError;
};

struct CholeskyError : SubriftError {
  using SubriftError::SubriftError;
};

struct NotRiemannianError : SubriftError {
  using SubriftError::SubriftError;
};

struct InconclusiveError : SubriftError {
  using SubriftError::SubriftError;
};

struct ZeroAcceptanceError : SubriftError {
  using SubriftError::SubriftError;
};

struct ConfigError : SubriftError {
  using SubriftError::SubriftError;
};

inline bool all_finite(const Vec& v) { return v.allFinite(); }
inline bool all_finite(const Mat& m) { return m.allFinite(); }

}  // namespace subrift
