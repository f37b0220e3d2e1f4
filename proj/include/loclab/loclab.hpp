#pragma once

#include "error.hpp"
#include "random.hpp"
#include "stats.hpp"
#include "measure.hpp"
#include "log_laplace.hpp"
#include "flow.hpp"
#include "report.hpp"
#include "localization.hpp"
#include "spectral.hpp"
#include "thinshell.hpp"
#include "serialize.hpp"
#include "checks.hpp"
#include "experiment.hpp"
