#pragma once

#include "filtreg/data.hpp"
#include "filtreg/errors.hpp"
#include "filtreg/hazard.hpp"
#include "filtreg/kernels.hpp"
#include "filtreg/montecarlo.hpp"
#include "filtreg/numerics.hpp"
#include "filtreg/regression.hpp"
#include "filtreg/shape.hpp"
#include "filtreg/step_function.hpp"
#include "filtreg/survivor.hpp"
