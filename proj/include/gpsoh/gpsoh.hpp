#pragma once

// Umbrella header for the whole library.

#include "gpsoh/baseline.hpp"
#include "gpsoh/datasets.hpp"
#include "gpsoh/dva.hpp"
#include "gpsoh/ecm.hpp"
#include "gpsoh/error.hpp"
#include "gpsoh/estimator.hpp"
#include "gpsoh/hyperopt.hpp"
#include "gpsoh/hyperparams.hpp"
#include "gpsoh/kalman.hpp"
#include "gpsoh/kernels.hpp"
#include "gpsoh/scenarios.hpp"
#include "gpsoh/segment.hpp"
#include "gpsoh/ssm.hpp"
#include "gpsoh/table_io.hpp"
