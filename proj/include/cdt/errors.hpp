#pragma once

#include <stdexcept>
#include <string>

namespace cdt {

// Error categories map to CLI exit codes:
//   config_error  -> 2   (bad config files, bad invocations)
//   data_error    -> 3   (bad cache files, alignment failures, bad datasets)
//   numeric_error -> 4   (NaN mid-pass, degenerate statistics)
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct data_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace cdt
