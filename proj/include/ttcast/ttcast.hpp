#pragma once

// Umbrella header for the whole library. Individual headers can be included
// on their own; only json_io.hpp drags in the vendored JSON parser.

#include "ttcast/baselines.hpp"
#include "ttcast/cnn.hpp"
#include "ttcast/cnn_general.hpp"
#include "ttcast/csv.hpp"
#include "ttcast/errors.hpp"
#include "ttcast/experiment.hpp"
#include "ttcast/grid.hpp"
#include "ttcast/grid2d.hpp"
#include "ttcast/json_io.hpp"
#include "ttcast/linalg.hpp"
#include "ttcast/metrics.hpp"
#include "ttcast/synth.hpp"
#include "ttcast/timeutil.hpp"
#include "ttcast/traffic.hpp"
