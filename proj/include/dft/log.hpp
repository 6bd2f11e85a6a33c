#pragma once

#include <functional>
#include <string>

namespace dft::logging {

enum class Level { info, warn };

using Sink = std::function<void(Level, const std::string&)>;

// Default sink writes "warning: ..." / "info: ..." lines to stderr.
void set_sink(Sink sink);
void reset_sink();

void info(const std::string& msg);
void warn(const std::string& msg);

}  // namespace dft::logging
