#pragma once

// Minimal warning channel. Library code reports recoverable oddities here;
// the default sink writes one line to stderr.

#include <cstddef>
#include <functional>
#include <string>

namespace care {

using WarningSink = std::function<void(const std::string&)>;

/// Installs a sink and returns the previous one. An empty sink silences output.
WarningSink set_warning_sink(WarningSink sink);

void warn(const std::string& message);

/// Number of warnings emitted by this thread since start.
std::size_t warning_count();

}  // namespace care
