///
/// \file lrpr.hpp
///
/// Umbrella header for the low-rank phase retrieval library.
///
#pragma once

#include "altmin.hpp"
#include "cg.hpp"
#include "core.hpp"
#include "io.hpp"
#include "measurement.hpp"
#include "pst.hpp"
#include "random.hpp"
#include "rwf.hpp"
#include "specinit.hpp"
#include "synth.hpp"
