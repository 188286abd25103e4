#pragma once

// Runtime scalar type for the learned modules. Gradient-check tests
// instantiate the templated kernels with double directly.

namespace bidlab {
#ifdef BIDLAB_REAL64
using real = double;
#else
using real = float;
#endif
}  // namespace bidlab
