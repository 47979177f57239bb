#pragma once

#include "wavefuse/controller.hpp"
#include "wavefuse/dataset.hpp"
#include "wavefuse/error.hpp"
#include "wavefuse/experiment.hpp"
#include "wavefuse/harness.hpp"
#include "wavefuse/learner.hpp"
#include "wavefuse/matrix.hpp"
#include "wavefuse/metrics.hpp"
#include "wavefuse/random.hpp"
#include "wavefuse/stats.hpp"
#include "wavefuse/strategies.hpp"
