// SPDX-License-Identifier: Apache-2.0
//
// vhftrack -- umbrella header.

#pragma once

#include "vhftrack/angles.hpp"
#include "vhftrack/antenna.hpp"
#include "vhftrack/detection.hpp"
#include "vhftrack/ekf.hpp"
#include "vhftrack/io.hpp"
#include "vhftrack/movement.hpp"
#include "vhftrack/observation.hpp"
#include "vhftrack/rng.hpp"
#include "vhftrack/tracker.hpp"
#include "vhftrack/validation.hpp"
