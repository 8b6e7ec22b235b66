#pragma once

#include "xfer/report/render.hpp"
#include "xfer/report/table.hpp"
