#pragma once

#include "kiln/connector.hpp"
#include "kiln/core_model.hpp"
#include "kiln/curation.hpp"
#include "kiln/errors.hpp"
#include "kiln/hrmc.hpp"
#include "kiln/platform.hpp"
#include "kiln/rng.hpp"
#include "kiln/run_spec.hpp"
#include "kiln/scheduler.hpp"
#include "kiln/sweep.hpp"
