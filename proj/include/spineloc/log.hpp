/*
 *  Copyright 2026 The spineloc Authors
 *
 *  Licensed under the Apache License, Version 2.0 (the "License");
 *  you may not use this file except in compliance with the License.
 *  You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 *  Unless required by applicable law or agreed to in writing, software
 *  distributed under the License is distributed on an "AS IS" BASIS,
 *  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 *  See the License for the specific language governing permissions and
 *  limitations under the License.
 */


// Minimal leveled logging to stderr.

#pragma once

#include <iostream>
#include <sstream>
#include <string_view>

namespace spineloc::log {

template <typename... Args>
void write(std::string_view level, Args&&... args) {
  std::ostringstream os;
  os << '[' << level << "] ";
  (os << ... << std::forward<Args>(args));
  os << '\n';
  std::cerr << os.str() << std::flush;
}

template <typename... Args>
void info(Args&&... args) {
  write("info", std::forward<Args>(args)...);
}

template <typename... Args>
void warn(Args&&... args) {
  write("warning", std::forward<Args>(args)...);
}

template <typename... Args>
void error(Args&&... args) {
  write("error", std::forward<Args>(args)...);
}

}  // namespace spineloc::log
