#include "audiotex/tensor.hpp"

#include <cmath>

namespace audiotex {

std::string to_string(const Shape4& s) {
  return "(" + std::to_string(s.b) + ", " + std::to_string(s.c) + ", " +
         std::to_string(s.h) + ", " + std::to_string(s.w) + ")";
}

bool Tensor4::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace audiotex
