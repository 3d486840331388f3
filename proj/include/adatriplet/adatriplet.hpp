#pragma once

// Umbrella header.

#include "adatriplet/automargin.hpp"
#include "adatriplet/batching.hpp"
#include "adatriplet/core.hpp"
#include "adatriplet/errors.hpp"
#include "adatriplet/experiment.hpp"
#include "adatriplet/io.hpp"
#include "adatriplet/losses.hpp"
#include "adatriplet/metrics.hpp"
#include "adatriplet/rng.hpp"
#include "adatriplet/synth.hpp"
#include "adatriplet/trainer.hpp"
