#pragma once

// Umbrella header: the full mesh-reconstruction toolkit.

#include "terramesh/autodiff.hpp"
#include "terramesh/delaunay.hpp"
#include "terramesh/edt.hpp"
#include "terramesh/encoder.hpp"
#include "terramesh/eval.hpp"
#include "terramesh/gcn.hpp"
#include "terramesh/geometry.hpp"
#include "terramesh/image.hpp"
#include "terramesh/init.hpp"
#include "terramesh/losses.hpp"
#include "terramesh/pipeline.hpp"
#include "terramesh/refine.hpp"
#include "terramesh/renderer.hpp"
#include "terramesh/rng.hpp"
#include "terramesh/synth.hpp"
#include "terramesh/tensor.hpp"
