#pragma once

// crowdscan: crowd-analytics toolkit. Rectifies and fuses surveillance
// views, extracts crowd motion by particle advection over optical flow,
// summarizes dominant flows, localizes congestion from lateral-oscillation
// signatures, and counts individuals from detector response maps, with a
// built-in synthetic crowd generator for end-to-end verification.

#include "crowdscan/congestion.hpp"
#include "crowdscan/counting.hpp"
#include "crowdscan/draw.hpp"
#include "crowdscan/error.hpp"
#include "crowdscan/flowsum.hpp"
#include "crowdscan/geometry.hpp"
#include "crowdscan/image.hpp"
#include "crowdscan/image_io.hpp"
#include "crowdscan/linalg.hpp"
#include "crowdscan/motion.hpp"
#include "crowdscan/optical_flow.hpp"
#include "crowdscan/parallel.hpp"
#include "crowdscan/pipeline.hpp"
#include "crowdscan/rng.hpp"
#include "crowdscan/synth.hpp"
