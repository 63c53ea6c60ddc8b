#pragma once

// Umbrella header for the training-set-reduction toolkit.

#include "tsr/curves.hpp"
#include "tsr/dataset.hpp"
#include "tsr/errors.hpp"
#include "tsr/harness.hpp"
#include "tsr/nnet.hpp"
#include "tsr/reduction.hpp"
