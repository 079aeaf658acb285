#pragma once

// Umbrella header.

#include "crloc/config.hpp"
#include "crloc/envmap.hpp"
#include "crloc/factors.hpp"
#include "crloc/geom.hpp"
#include "crloc/io.hpp"
#include "crloc/linear.hpp"
#include "crloc/localize.hpp"
#include "crloc/pipeline.hpp"
#include "crloc/ply.hpp"
#include "crloc/recon.hpp"
#include "crloc/sim/mesh.hpp"
#include "crloc/sim/rng.hpp"
#include "crloc/sim/robot.hpp"
#include "crloc/sim/scene.hpp"
#include "crloc/sim/sensors.hpp"
#include "crloc/sim/simulate.hpp"
#include "crloc/solver.hpp"
#include "crloc/state.hpp"
