#pragma once

// Compressive independent component analysis: sketch a dataset's 4th order
// cumulant structure into m numbers and recover the mixing matrix from the
// sketch alone.

#include "cica/errors.hpp"
#include "cica/evalsynth.hpp"
#include "cica/experiments.hpp"
#include "cica/pipeline.hpp"
#include "cica/projection.hpp"
#include "cica/rng.hpp"
#include "cica/sketch.hpp"
#include "cica/solvers.hpp"
#include "cica/tensor.hpp"
