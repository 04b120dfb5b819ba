#pragma once

// Text serialization for dense tensors. Layout (see docs/FORMATS.md):
//
//   vec <len>                 followed by len values
//   mat <rows> <cols>         followed by rows lines of cols values
//   tensor3 <d0> <d1> <d2>    followed by d0*d1 lines of d2 values, (i, j) row-major
//
// Values use the shortest decimal form that parses back to the same double,
// so save -> load is bit-exact.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>

#include "bilinear/tensor.hpp"

namespace bilinear {

std::string format_double(double v);
double parse_double(std::string_view text);
long long parse_int(std::string_view text);
std::uint64_t parse_u64(std::string_view text);

void write_tensor(std::ostream& os, const Vec64& v);
void write_tensor(std::ostream& os, const Mat64& m);
void write_tensor(std::ostream& os, const Tensor3& t);

Vec64 read_vec(std::istream& is);
Mat64 read_mat(std::istream& is);
Tensor3 read_tensor3(std::istream& is);

/// Next whitespace-delimited word; throws ParseError at end of stream.
std::string read_word(std::istream& is, std::string_view what);

}  // namespace bilinear
