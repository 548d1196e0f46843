#pragma once

#include <stdexcept>
#include <string>

namespace clarifid {

// Every error raised by the library derives from Error so callers (the CLI in
// particular) can catch one type and map it to a nonzero exit status.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define CLARIFID_DEFINE_ERROR(Name) \
  class Name : public Error {       \
   public:                          \
    using Error::Error;             \
  }

CLARIFID_DEFINE_ERROR(ShapeError);
CLARIFID_DEFINE_ERROR(DegenerateRowError);
CLARIFID_DEFINE_ERROR(EmptyLossError);
CLARIFID_DEFINE_ERROR(RankError);
CLARIFID_DEFINE_ERROR(StructureError);
CLARIFID_DEFINE_ERROR(ConfigError);
CLARIFID_DEFINE_ERROR(ConsistencyError);
CLARIFID_DEFINE_ERROR(LengthError);
CLARIFID_DEFINE_ERROR(SamplingError);
CLARIFID_DEFINE_ERROR(PairingError);
CLARIFID_DEFINE_ERROR(UsageError);
CLARIFID_DEFINE_ERROR(DataError);
CLARIFID_DEFINE_ERROR(LoadError);
CLARIFID_DEFINE_ERROR(StageOrderError);

#undef CLARIFID_DEFINE_ERROR

}  // namespace clarifid
