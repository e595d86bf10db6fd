#pragma once

#include "voltvar/aarc.hpp"
#include "voltvar/consensus.hpp"
#include "voltvar/convex_qp.hpp"
#include "voltvar/dataset.hpp"
#include "voltvar/feeder_io.hpp"
#include "voltvar/grid.hpp"
#include "voltvar/harness.hpp"
#include "voltvar/metrics.hpp"
#include "voltvar/mlp.hpp"
#include "voltvar/powerflow.hpp"
#include "voltvar/selection.hpp"
#include "voltvar/stage1.hpp"
