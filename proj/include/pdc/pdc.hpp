#pragma once

#include "pdc/types.hpp"
#include "pdc/fft.hpp"
#include "pdc/rng.hpp"
#include "pdc/core_model.hpp"
#include "pdc/channel_sim.hpp"
#include "pdc/sparse_psf.hpp"
#include "pdc/clustering.hpp"
#include "pdc/decontam.hpp"
#include "pdc/system_sim.hpp"
#include "pdc/io.hpp"
#include "pdc/bench.hpp"
