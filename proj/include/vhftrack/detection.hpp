// SPDX-License-Identifier: Apache-2.0
//
// vhftrack -- one logged signal-strength reading.

#pragma once

#include <string>

namespace vhftrack {

/// One timestamped display reading bound to a tower beam.
struct Detection {
    std::string tag_id;
    double t = 0.0;  ///< UTC seconds, millisecond precision
    std::string tower_id;
    int beam_index = 0;
    int display = 0;  ///< integer display value Z in [0, 255]
};

}  // namespace vhftrack
