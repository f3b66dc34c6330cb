#pragma once

#include <stdexcept>
#include <string>

namespace vortexflow {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define VORTEXFLOW_ERROR(Name)                                   \
    class Name : public Error {                                  \
    public:                                                      \
        explicit Name(const std::string& what) : Error(what) {} \
    }

VORTEXFLOW_ERROR(ConfigError);
VORTEXFLOW_ERROR(SingularField);
VORTEXFLOW_ERROR(NodeAtInfinity);
VORTEXFLOW_ERROR(NoRealRoot);
VORTEXFLOW_ERROR(DegenerateRoot);
VORTEXFLOW_ERROR(NoConvergence);
VORTEXFLOW_ERROR(DegenerateJacobian);
VORTEXFLOW_ERROR(BranchLost);
VORTEXFLOW_ERROR(DegenerateGuess);
VORTEXFLOW_ERROR(SpuriousXPoint);
VORTEXFLOW_ERROR(DegenerateNode);
VORTEXFLOW_ERROR(InfiniteF3);
VORTEXFLOW_ERROR(SeparatrixC);
VORTEXFLOW_ERROR(SeparatrixLaunch);
VORTEXFLOW_ERROR(DegenerateFit);

#undef VORTEXFLOW_ERROR

}  // namespace vortexflow
