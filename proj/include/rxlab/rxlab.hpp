#pragma once

// Umbrella header: the whole receiver lab.

#include "rxlab/baselines.hpp"
#include "rxlab/chanest.hpp"
#include "rxlab/channel.hpp"
#include "rxlab/common.hpp"
#include "rxlab/config.hpp"
#include "rxlab/constellation.hpp"
#include "rxlab/dataset.hpp"
#include "rxlab/detect_gnn.hpp"
#include "rxlab/detect_qrm.hpp"
#include "rxlab/flops.hpp"
#include "rxlab/grid.hpp"
#include "rxlab/metrics.hpp"
#include "rxlab/neural.hpp"
#include "rxlab/numerics.hpp"
#include "rxlab/rng.hpp"
#include "rxlab/selftest.hpp"
#include "rxlab/sweep.hpp"
#include "rxlab/train.hpp"
#include "rxlab/weights.hpp"
