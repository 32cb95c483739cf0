#pragma once

#include "dispersion/error.hpp"
#include "dispersion/interval.hpp"
#include "dispersion/report.hpp"
#include "dispersion/numeric.hpp"
#include "dispersion/quadrature.hpp"
#include "dispersion/expression.hpp"
#include "dispersion/deviance.hpp"
#include "dispersion/renormalized.hpp"
#include "dispersion/edm.hpp"
#include "dispersion/family_config.hpp"
#include "dispersion/tweedie.hpp"
#include "dispersion/saddlepoint.hpp"
#include "dispersion/pdm.hpp"
#include "dispersion/cf_construct.hpp"
#include "dispersion/regression.hpp"
#include "dispersion/checks.hpp"
#include "dispersion/csv.hpp"
