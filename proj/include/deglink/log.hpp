#pragma once

#include <string_view>

namespace deglink {

/// Writes "warning: <message>" to stderr unless warnings are silenced.
void warn(std::string_view message);
void set_warnings_enabled(bool enabled);

/// Progress line on stderr, shown only when verbose output is on.
void info(std::string_view message);
void set_verbose(bool verbose);

}  // namespace deglink
