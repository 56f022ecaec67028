#include "avgflow/errors.hpp"

namespace avgflow {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid-argument";
    case ErrorKind::kConfiguration: return "configuration";
    case ErrorKind::kNotAveragedControllable: return "not-averaged-controllable";
    case ErrorKind::kNearTerminalSingularity: return "near-terminal-singularity";
    case ErrorKind::kDegeneratePosterior: return "degenerate-posterior";
    case ErrorKind::kTrainingDivergence: return "training-divergence";
  }
  return "unknown";
}

void rethrow_with_context(const Error& e, const std::string& context) {
  const std::string msg = context + ": " + e.what();
  switch (e.kind()) {
    case ErrorKind::kInvalidArgument: throw InvalidArgument(msg);
    case ErrorKind::kConfiguration: throw ConfigError(msg);
    case ErrorKind::kNotAveragedControllable: {
      const auto& c = dynamic_cast<const NotAveragedControllable&>(e);
      throw NotAveragedControllable(msg, c.smallest_eigenvalue(), c.condition_number());
    }
    case ErrorKind::kNearTerminalSingularity:
      throw NearTerminalSingularity(msg, dynamic_cast<const NearTerminalSingularity&>(e).index());
    case ErrorKind::kDegeneratePosterior: throw DegeneratePosterior(msg);
    case ErrorKind::kTrainingDivergence:
      throw TrainingDivergence(msg, dynamic_cast<const TrainingDivergence&>(e).batch_index());
  }
  throw Error(e.kind(), msg);
}

}  // namespace avgflow
