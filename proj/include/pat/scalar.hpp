#pragma once

// Numeric code is built twice: binary32 for training/inference and binary64
// for gradient verification. Each build lives in its own inline namespace so
// both can be linked into one executable.
#if defined(PAT_SCALAR_F64)
#define PAT_ABI f64
#else
#define PAT_ABI f32
#endif

namespace pat {
inline namespace PAT_ABI {

#if defined(PAT_SCALAR_F64)
using Scalar = double;
#else
using Scalar = float;
#endif

}  // namespace PAT_ABI
}  // namespace pat
