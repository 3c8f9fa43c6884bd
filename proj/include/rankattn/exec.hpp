#pragma once

namespace rankattn {

// Kernels that have an OpenMP path keep a serial reference path with the
// same arithmetic, so both produce bitwise-identical results.
enum class Exec { serial, parallel };

}  // namespace rankattn
