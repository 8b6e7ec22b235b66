#pragma once

#include "xfer/trainer/config.hpp"
#include "xfer/trainer/data.hpp"
#include "xfer/trainer/experiment.hpp"
#include "xfer/trainer/optimizer.hpp"
#include "xfer/trainer/phases.hpp"
#include "xfer/trainer/presets.hpp"
#include "xfer/trainer/schedule.hpp"
