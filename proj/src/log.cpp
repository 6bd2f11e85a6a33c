#include "dft/log.hpp"

#include <iostream>
#include <mutex>

namespace dft::logging {
namespace {

void stderr_sink(Level level, const std::string& msg) {
    std::cerr << (level == Level::warn ? "warning: " : "info: ") << msg << '\n';
}

std::mutex& sink_mutex() {
    static std::mutex m;
    return m;
}

Sink& current() {
    static Sink sink = stderr_sink;
    return sink;
}

void emit(Level level, const std::string& msg) {
    std::lock_guard lock(sink_mutex());
    current()(level, msg);
}

}  // namespace

void set_sink(Sink sink) {
    std::lock_guard lock(sink_mutex());
    current() = std::move(sink);
}

void reset_sink() { set_sink(stderr_sink); }

void info(const std::string& msg) { emit(Level::info, msg); }
void warn(const std::string& msg) { emit(Level::warn, msg); }

}  // namespace dft::logging
