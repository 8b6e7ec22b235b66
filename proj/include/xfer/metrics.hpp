#pragma once

#include "xfer/metrics/classification.hpp"
#include "xfer/metrics/record.hpp"
#include "xfer/metrics/retrieval.hpp"
#include "xfer/metrics/span.hpp"
