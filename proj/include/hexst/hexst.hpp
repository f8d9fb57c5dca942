#pragma once

#include "checkpoint.hpp"
#include "config.hpp"
#include "errors.hpp"
#include "hexgeom.hpp"
#include "hexrope.hpp"
#include "io.hpp"
#include "losses.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "numerics.hpp"
#include "render.hpp"
#include "synth.hpp"
#include "trainer.hpp"
#include "windowing.hpp"
