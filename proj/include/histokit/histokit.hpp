#pragma once

#include "histokit/error.hpp"
#include "histokit/forest.hpp"
#include "histokit/instance_seg.hpp"
#include "histokit/morphology.hpp"
#include "histokit/parallel.hpp"
#include "histokit/patch_pipeline.hpp"
#include "histokit/png_io.hpp"
#include "histokit/probmap.hpp"
#include "histokit/raster.hpp"
#include "histokit/rng.hpp"
#include "histokit/seg_metrics.hpp"
#include "histokit/stain_norm.hpp"
#include "histokit/synth.hpp"
#include "histokit/wsi_classify.hpp"
#include "histokit/wsi_features.hpp"

namespace histokit {
inline constexpr const char* kVersion = "0.1.0";
}
