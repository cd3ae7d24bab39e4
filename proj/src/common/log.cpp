#include "care/log.hpp"

#include <iostream>

namespace care {

namespace {

WarningSink& sink() {
  thread_local WarningSink s = [](const std::string& m) { std::cerr << "warning: " << m << '\n'; };
  return s;
}

thread_local std::size_t g_count = 0;

}  // namespace

WarningSink set_warning_sink(WarningSink next) {
  WarningSink prev = std::move(sink());
  sink() = std::move(next);
  return prev;
}

void warn(const std::string& message) {
  ++g_count;
  if (sink()) sink()(message);
}

std::size_t warning_count() { return g_count; }

}  // namespace care
