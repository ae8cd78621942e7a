#pragma once

#include "dms/config.hpp"
#include "dms/error.hpp"
#include "dms/grid.hpp"
#include "dms/hyperopt.hpp"
#include "dms/image_io.hpp"
#include "dms/jacobian.hpp"
#include "dms/noise.hpp"
#include "dms/parallel.hpp"
#include "dms/phantoms.hpp"
#include "dms/random.hpp"
#include "dms/solver.hpp"
#include "dms/stein.hpp"
