#pragma once

// Sampled edge profiles: monotone cubic interpolation between samples, and
// the declared asymptotic class analytically between the outermost sample
// and the edge endpoint (so log(0) is never evaluated).

#include <cmath>

// Boost 1.74's pchip calls isnan unqualified.
namespace boost::math::interpolators {
using std::isnan;
}
#include <boost/math/interpolators/pchip.hpp>

#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gspde/error.hpp"
#include "gspde/graph.hpp"

namespace gspde {

enum class AsymptoticClass { LinearVanishing, Constant, LogBlowup, LinearGrowth };

inline const char* to_string(AsymptoticClass c) {
  switch (c) {
    case AsymptoticClass::LinearVanishing: return "linear-vanishing";
    case AsymptoticClass::Constant: return "constant";
    case AsymptoticClass::LogBlowup: return "log-blowup";
    case AsymptoticClass::LinearGrowth: return "linear-growth";
  }
  return "?";
}

inline AsymptoticClass parse_asymptotic_class(const std::string& s) {
  if (s == "linear-vanishing") return AsymptoticClass::LinearVanishing;
  if (s == "constant") return AsymptoticClass::Constant;
  if (s == "log-blowup") return AsymptoticClass::LogBlowup;
  if (s == "linear-growth") return AsymptoticClass::LinearGrowth;
  throw Error(ErrorCode::InvalidConfig, "unknown asymptotic class '" + s + "'");
}

/// Chebyshev points of the first kind mapped to [lo, hi] (ascending).
inline std::vector<double> chebyshev_nodes(double lo, double hi, std::size_t n) {
  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = std::cos(M_PI * (2.0 * static_cast<double>(n - 1 - i) + 1.0) /
                              (2.0 * static_cast<double>(n)));
    z[i] = 0.5 * (lo + hi) + 0.5 * (hi - lo) * t;
  }
  return z;
}

class TabulatedProfile {
 public:
  TabulatedProfile() = default;

  /// `lo_end`/`hi_end` are the edge endpoints (hi_end may be +inf); samples
  /// must lie strictly inside and be strictly increasing (at least 4).
  TabulatedProfile(std::vector<double> z, std::vector<double> v, double lo_end, double hi_end,
                   AsymptoticClass lo_class, AsymptoticClass hi_class)
      : z_(z), v_(v), lo_end_(lo_end), hi_end_(hi_end), lo_class_(lo_class), hi_class_(hi_class) {
    if (z_.size() < 4 || z_.size() != v_.size()) {
      throw Error(ErrorCode::PreconditionViolated, "tabulation needs >= 4 matching samples");
    }
    for (std::size_t i = 1; i < z_.size(); ++i) {
      if (!(z_[i] > z_[i - 1])) {
        throw Error(ErrorCode::PreconditionViolated, "tabulation nodes must increase");
      }
    }
    if (!(z_.front() > lo_end_) || !(z_.back() < hi_end_)) {
      throw Error(ErrorCode::PreconditionViolated, "tabulation nodes must be interior");
    }
    interp_ = std::make_shared<Interp>(std::move(z), std::move(v));
  }

  double operator()(double z) const {
    const double z0 = z_.front();
    const double zn = z_.back();
    if (z < z0) return extend(z, lo_class_, lo_end_, 0, 1);
    if (z > zn) return extend(z, hi_class_, hi_end_, z_.size() - 1, z_.size() - 2);
    return (*interp_)(z);
  }

  double derivative(double z) const {
    if (z >= z_.front() && z <= z_.back()) return interp_->prime(z);
    const double h = 1e-7 * std::max(1.0, std::abs(z));
    return ((*this)(z + h) - (*this)(z - h)) / (2.0 * h);
  }

  const std::vector<double>& nodes() const { return z_; }
  const std::vector<double>& values() const { return v_; }

 private:
  using Interp = boost::math::interpolators::pchip<std::vector<double>>;

  double extend(double z, AsymptoticClass cls, double end, std::size_t i0, std::size_t i1) const {
    const double za = z_[i0], va = v_[i0];
    const double zb = z_[i1], vb = v_[i1];
    switch (cls) {
      case AsymptoticClass::LinearVanishing:
        return va * std::abs(z - end) / std::abs(za - end);
      case AsymptoticClass::Constant:
        return va;
      case AsymptoticClass::LogBlowup: {
        const double ta = -std::log(std::abs(za - end));
        const double tb = -std::log(std::abs(zb - end));
        const double slope = (va - vb) / (ta - tb);
        const double dist = std::max(std::abs(z - end), 1e-300);
        return va + slope * (-std::log(dist) - ta);
      }
      case AsymptoticClass::LinearGrowth:
        return va + (vb - va) / (zb - za) * (z - za);
    }
    return va;
  }

  std::vector<double> z_, v_;
  double lo_end_ = 0.0, hi_end_ = 1.0;
  AsymptoticClass lo_class_ = AsymptoticClass::Constant;
  AsymptoticClass hi_class_ = AsymptoticClass::Constant;
  std::shared_ptr<Interp> interp_;
};

struct CoefficientTable {
  std::vector<double> z, alpha, beta;
};

/// Reads a CSV with a header row and columns z, alpha, beta.
inline CoefficientTable read_coefficient_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidConfig, "cannot open table " + path);
  CoefficientTable t;
  std::string line;
  std::getline(in, line);
  {
    std::string header;
    for (char c : line) {
      if (c != ' ' && c != '\r') header += c;
    }
    if (header != "z,alpha,beta") {
      throw Error(ErrorCode::ParseError, path + ": expected header z,alpha,beta");
    }
  }
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::stringstream ss(line);
    std::string cell;
    double vals[3];
    for (int c = 0; c < 3; ++c) {
      if (!std::getline(ss, cell, ',')) {
        throw Error(ErrorCode::ParseError, path + ": row " + std::to_string(row) + " too short");
      }
      try {
        vals[c] = std::stod(cell);
      } catch (const std::exception&) {
        throw Error(ErrorCode::ParseError, path + ": row " + std::to_string(row) + " bad number");
      }
    }
    t.z.push_back(vals[0]);
    t.alpha.push_back(vals[1]);
    t.beta.push_back(vals[2]);
  }
  return t;
}

}  // namespace gspde
