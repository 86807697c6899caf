#include <cmath>
#include <cstdio>
#include <ostream>

#include "ulk/erf.hpp"

namespace ulk {

void write_erf_csv(std::ostream& os, const ErfMap& m) {
  const Index rows = m.grid.dim(0), cols = m.grid.dim(1);
  char buf[32];
  for (Index y = 0; y < rows; ++y) {
    for (Index x = 0; x < cols; ++x) {
      std::snprintf(buf, sizeof buf, "%.9g", m.grid(y, x));
      os << (x ? "," : "") << buf;
    }
    os << '\n';
  }
}

void write_erf_pgm(std::ostream& os, const ErfMap& m, double gamma) {
  const Index rows = m.grid.dim(0), cols = m.grid.dim(1);
  os << "P5\n" << cols << ' ' << rows << "\n255\n";
  for (Index i = 0; i < rows * cols; ++i) {
    const double v = std::clamp(m.grid.ptr()[i], 0.0, 1.0);
    os.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * std::pow(v, gamma)))));
  }
}

}  // namespace ulk
