#pragma once

#include <functional>
#include <string>

namespace invp::log {

enum class Level { info, warning };

using Sink = std::function<void(Level, const std::string&)>;

// Replaces the process-wide sink; an empty function restores stderr output.
void set_sink(Sink sink);

void info(const std::string& message);
void warning(const std::string& message);

}  // namespace invp::log
