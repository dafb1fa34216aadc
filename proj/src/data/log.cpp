// Copyright 2026 The EMERT Lab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "emert/log.hpp"

#include <iostream>
#include <mutex>

namespace emert {
namespace {

std::mutex g_mu;

void stderr_sink(LogLevel level, std::string_view message) {
  std::cerr << (level == LogLevel::kWarning ? "warning: " : "") << message << '\n';
}

LogSink& sink() {
  static LogSink s = stderr_sink;
  return s;
}

void emit(LogLevel level, std::string_view message) {
  std::lock_guard lock(g_mu);
  if (sink()) sink()(level, message);
}

}  // namespace

LogSink set_log_sink(LogSink s) {
  std::lock_guard lock(g_mu);
  LogSink previous = std::move(sink());
  sink() = std::move(s);
  return previous;
}

void log_info(std::string_view message) { emit(LogLevel::kInfo, message); }
void log_warning(std::string_view message) { emit(LogLevel::kWarning, message); }

}  // namespace emert
