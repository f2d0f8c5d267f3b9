#pragma once

#include "cesfit/ces.hpp"
#include "cesfit/data.hpp"
#include "cesfit/errors.hpp"
#include "cesfit/grid.hpp"
#include "cesfit/lm.hpp"
#include "cesfit/objective.hpp"
#include "cesfit/stats.hpp"
