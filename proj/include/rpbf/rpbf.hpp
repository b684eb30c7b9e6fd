#pragma once

#include "rpbf/calibration.hpp"
#include "rpbf/dataset.hpp"
#include "rpbf/distributions.hpp"
#include "rpbf/ensemble.hpp"
#include "rpbf/error.hpp"
#include "rpbf/linalg.hpp"
#include "rpbf/parallel.hpp"
#include "rpbf/randproj.hpp"
#include "rpbf/rng.hpp"
#include "rpbf/simharness.hpp"
#include "rpbf/teststat.hpp"
#include "rpbf/version.hpp"
