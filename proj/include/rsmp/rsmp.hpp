#pragma once

#include "rsmp/errors.hpp"
#include "rsmp/rng.hpp"
#include "rsmp/grid.hpp"
#include "rsmp/regime.hpp"
#include "rsmp/levy.hpp"
#include "rsmp/parallel.hpp"
#include "rsmp/bundle.hpp"
#include "rsmp/model.hpp"
#include "rsmp/simulate.hpp"
#include "rsmp/estimate.hpp"
#include "rsmp/quadrature.hpp"
#include "rsmp/regression.hpp"
#include "rsmp/bsde.hpp"
#include "rsmp/mc.hpp"
#include "rsmp/principle.hpp"
