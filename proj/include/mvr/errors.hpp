#pragma once

#include <stdexcept>
#include <string>

namespace mvr {

// Root of every error the library raises. Callers that only care about
// "something in the pipeline failed" can catch this one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// geometry
class DegenerateObservation : public Error { public: using Error::Error; };
class BehindCamera : public Error { public: using Error::Error; };
class NonPlanarEstimate : public Error { public: using Error::Error; };

// scene simulation
class PlacementFailure : public Error { public: using Error::Error; };
class EmptyFrame : public Error { public: using Error::Error; };
class CollisionAtTarget : public Error { public: using Error::Error; };

// perception database
class EmptyRegion : public Error { public: using Error::Error; };
class ClusterCountInfeasible : public Error { public: using Error::Error; };
class NoRegions : public Error { public: using Error::Error; };

// localization
class TooFewCorrespondences : public Error { public: using Error::Error; };
class DegenerateGeometry : public Error { public: using Error::Error; };
class NoCandidates : public Error { public: using Error::Error; };

// planner
class UnknownObject : public Error { public: using Error::Error; };
class ReobservationFailed : public Error { public: using Error::Error; };
class NoBufferSpace : public Error { public: using Error::Error; };

// harness / io
class ConfigParse : public Error { public: using Error::Error; };
class IOFailure : public Error { public: using Error::Error; };

}  // namespace mvr
