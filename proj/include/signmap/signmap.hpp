#pragma once

#include "signmap/align.hpp"
#include "signmap/camera.hpp"
#include "signmap/errors.hpp"
#include "signmap/geo.hpp"
#include "signmap/io.hpp"
#include "signmap/metrics.hpp"
#include "signmap/pipeline.hpp"
#include "signmap/synth.hpp"
#include "signmap/triangulate.hpp"
