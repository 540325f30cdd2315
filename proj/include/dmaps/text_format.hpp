#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "dmaps/csv.hpp"
#include "dmaps/error.hpp"

namespace dmaps {

namespace detail {

inline void write_values(std::ostream& out, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) out << ' ' << format_double(v(i));
}

class TokenReader {
 public:
  TokenReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  std::string word() {
    std::string w;
    if (!(in_ >> w)) fail("unexpected end of file");
    return w;
  }

  void expect(const std::string& keyword) {
    const auto w = word();
    if (w != keyword) fail("expected '" + keyword + "', found '" + w + "'");
  }

  double number() {
    const auto w = word();
    const auto v = parse_double(w);
    if (!v) fail("not a number: '" + w + "'");
    return *v;
  }

  long integer() {
    const double v = number();
    if (v != std::floor(v)) fail("expected an integer");
    return static_cast<long>(v);
  }

  Eigen::VectorXd vector(Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = number();
    return v;
  }

  Eigen::MatrixXd matrix(Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = number();
    }
    return m;
  }

  std::string line() {
    std::string l;
    std::getline(in_ >> std::ws, l);
    return l;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError("'" + source_ + "': " + what);
  }

 private:
  std::istream& in_;
  std::string source_;
};

}  // namespace detail

}  // namespace dmaps
