#pragma once

#include "mediation/errors.hpp"
#include "mediation/csv.hpp"
#include "mediation/data.hpp"
#include "mediation/rng.hpp"
#include "mediation/numeric.hpp"
#include "mediation/probit.hpp"
#include "mediation/parametric.hpp"
#include "mediation/nonparametric.hpp"
#include "mediation/sensitivity.hpp"
#include "mediation/simplex.hpp"
#include "mediation/bounds.hpp"
#include "mediation/simulation.hpp"
