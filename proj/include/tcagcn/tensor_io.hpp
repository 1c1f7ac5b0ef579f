#pragma once

#include <iosfwd>

#include "tcagcn/tensor.hpp"

namespace tcagcn {

// Binary layout, little-endian: "TCAT", u32 rank, u64 extents[rank], f64 payload.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

/// Bytes occupied by write_tensor(t).
std::size_t serialized_size(const Tensor& t);

}  // namespace tcagcn
