#include "bilinear/serialize.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <vector>

#include "bilinear/error.hpp"

namespace bilinear {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ParseError("not a number: '" + std::string(text) + "'");
  }
  if (!std::isfinite(v)) throw ParseError("non-finite value: '" + std::string(text) + "'");
  return v;
}

long long parse_int(std::string_view text) {
  long long v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ParseError("not an integer: '" + std::string(text) + "'");
  }
  return v;
}

std::uint64_t parse_u64(std::string_view text) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ParseError("not an unsigned integer: '" + std::string(text) + "'");
  }
  return v;
}

std::string read_word(std::istream& is, std::string_view what) {
  std::string w;
  if (!(is >> w)) throw ParseError("unexpected end of input while reading " + std::string(what));
  return w;
}

namespace {

std::size_t read_dim(std::istream& is) {
  const long long d = parse_int(read_word(is, "dimension"));
  if (d <= 0) throw ParseError("dimensions must be positive");
  return static_cast<std::size_t>(d);
}

void expect_kind(std::istream& is, std::string_view kind) {
  const std::string w = read_word(is, "tensor header");
  if (w != kind) throw ParseError("expected '" + std::string(kind) + "' header, got '" + w + "'");
}

std::vector<double> read_values(std::istream& is, std::size_t n) {
  std::vector<double> out(n);
  for (auto& v : out) v = parse_double(read_word(is, "tensor payload"));
  return out;
}

void write_rows(std::ostream& os, std::span<const double> values, std::size_t width) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    os << format_double(values[i]) << ((i + 1) % width == 0 ? '\n' : ' ');
  }
}

}  // namespace

void write_tensor(std::ostream& os, const Vec64& v) {
  os << "vec " << v.size() << '\n';
  write_rows(os, v.values(), v.size());
}

void write_tensor(std::ostream& os, const Mat64& m) {
  os << "mat " << m.rows() << ' ' << m.cols() << '\n';
  write_rows(os, m.values(), m.cols());
}

void write_tensor(std::ostream& os, const Tensor3& t) {
  os << "tensor3 " << t.d0() << ' ' << t.d1() << ' ' << t.d2() << '\n';
  write_rows(os, t.values(), t.d2());
}

Vec64 read_vec(std::istream& is) {
  expect_kind(is, "vec");
  const auto n = read_dim(is);
  return Vec64(read_values(is, n));
}

Mat64 read_mat(std::istream& is) {
  expect_kind(is, "mat");
  const auto r = read_dim(is);
  const auto c = read_dim(is);
  return Mat64(r, c, read_values(is, r * c));
}

Tensor3 read_tensor3(std::istream& is) {
  expect_kind(is, "tensor3");
  const auto d0 = read_dim(is);
  const auto d1 = read_dim(is);
  const auto d2 = read_dim(is);
  return Tensor3(d0, d1, d2, read_values(is, d0 * d1 * d2));
}

}  // namespace bilinear
