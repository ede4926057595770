#pragma once

// Umbrella header: every fairalloc module.

#include "fairalloc/errors.hpp"
#include "fairalloc/matrix.hpp"
#include "fairalloc/rng.hpp"
#include "fairalloc/core.hpp"
#include "fairalloc/oracle.hpp"
#include "fairalloc/evaluate.hpp"
#include "fairalloc/program.hpp"
#include "fairalloc/simplex.hpp"
#include "fairalloc/lp.hpp"
#include "fairalloc/exact.hpp"
#include "fairalloc/grad.hpp"
#include "fairalloc/datagen.hpp"
#include "fairalloc/marketsim.hpp"
#include "fairalloc/svg.hpp"
#include "fairalloc/experiment.hpp"
