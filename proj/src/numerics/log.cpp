#include "patmod/log.hpp"

#include <atomic>
#include <cstdio>
#include <mutex>

namespace patmod::log {
namespace {

std::atomic<Level> g_level{Level::warning};
std::mutex g_mutex;

void emit(const char* tag, std::string_view message) {
  std::lock_guard lock(g_mutex);
  std::fprintf(stderr, "[patmod %s] %.*s\n", tag, static_cast<int>(message.size()), message.data());
}

}  // namespace

void set_level(Level level) { g_level.store(level); }
Level level() { return g_level.load(); }

void warn(std::string_view message) {
  if (g_level.load() >= Level::warning) emit("warning", message);
}

void info(std::string_view message) {
  if (g_level.load() >= Level::info) emit("info", message);
}

}  // namespace patmod::log
