#pragma once

#include "biasamp/core.hpp"
#include "biasamp/gaussmodel.hpp"
#include "biasamp/influence.hpp"
#include "biasamp/metrics.hpp"
#include "biasamp/mitigate.hpp"
#include "biasamp/parallel.hpp"
#include "biasamp/sgdtrain.hpp"
#include "biasamp/harness/config.hpp"
#include "biasamp/harness/experiments.hpp"
#include "biasamp/harness/io.hpp"
