#pragma once

#include <iostream>
#include <string>
#include <vector>

namespace minkloc {

// Collects non-fatal warnings. Operations that may warn take an optional
// pointer; when it is null the message goes to stderr.
struct Diagnostics {
  std::vector<std::string> warnings;

  bool empty() const { return warnings.empty(); }
};

inline void warn(Diagnostics* diag, std::string message) {
  if (diag != nullptr) {
    diag->warnings.push_back(std::move(message));
  } else {
    std::cerr << "warning: " << message << '\n';
  }
}

}  // namespace minkloc
