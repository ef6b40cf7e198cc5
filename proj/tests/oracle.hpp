#ifndef EWOC_TESTS_ORACLE_HPP
#define EWOC_TESTS_ORACLE_HPP

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <filesystem>
#include <string>

#include "ewoc/models.hpp"

namespace ewoc::test {

/// 50 significant digits, no expression templates so it drops into the model templates.
using mp = boost::multiprecision::number<boost::multiprecision::cpp_bin_float<50>, boost::multiprecision::et_off>;

inline DesignConstants r115777_constants() { return {1.0 / 3.0, 60.0, 600.0, std::nullopt, Link::logistic}; }

inline BasicDesignConstants<mp> to_mp(const DesignConstants& c) {
  BasicDesignConstants<mp> out;
  out.theta = c.theta;
  out.x_min = c.x_min;
  out.x_max = c.x_max;
  if (c.epsilon) out.epsilon = mp(*c.epsilon);
  return out;
}

inline double rel_err(double got, const mp& want) {
  const mp diff = abs(mp(got) - want);
  return static_cast<double>(diff / abs(want));
}

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(EWOC_FIXTURE_DIR) / name;
}

}  // namespace ewoc::test

#endif  // EWOC_TESTS_ORACLE_HPP
