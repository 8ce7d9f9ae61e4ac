#pragma once

// Convenience umbrella: pulls in the full simulation, analysis, experiment,
// and file-format surface. Include individual headers to keep builds lean.

#include "stabilitylab/analysis.hpp"
#include "stabilitylab/errors.hpp"
#include "stabilitylab/experiment.hpp"
#include "stabilitylab/io.hpp"
#include "stabilitylab/levmar.hpp"
#include "stabilitylab/matrix.hpp"
#include "stabilitylab/measure.hpp"
#include "stabilitylab/model.hpp"
#include "stabilitylab/rng.hpp"
#include "stabilitylab/stats.hpp"
#include "stabilitylab/version.hpp"
