// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>

#include "dime/adapter.hpp"

namespace dime {

// Plain-text model checkpoint. Each tensor is a manifest line "name rows cols"
// followed by the tensor in the matrix text format. Vectors are stored as
// single-row matrices.
void write_checkpoint(std::ostream& out, const ModelState& state);
ModelState read_checkpoint(std::istream& in);

}  // namespace dime
