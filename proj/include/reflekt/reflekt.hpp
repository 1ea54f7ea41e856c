#pragma once

#include "reflekt/error.hpp"
#include "reflekt/vec.hpp"
#include "reflekt/convex_domain.hpp"
#include "reflekt/grid.hpp"
#include "reflekt/coefficients.hpp"
#include "reflekt/noise.hpp"
#include "reflekt/reflection_measure.hpp"
#include "reflekt/stepper.hpp"
#include "reflekt/estimators.hpp"
#include "reflekt/config.hpp"
#include "reflekt/experiment.hpp"
