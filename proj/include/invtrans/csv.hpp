#pragma once

#include <string>

#include "invtrans/types.hpp"

namespace invtrans {

// Dataset CSV layout: header `task,y,x1,...,xp`, one observation per row, an
// empty y field marking an unlabeled row. Rows are grouped into one labeled
// and one unlabeled partition per task id, partitions ordered by first
// appearance in the file.
MultiTaskDataset load_csv(const std::string& path);

// Inverse of load_csv: numbers are written with shortest round-trip
// precision, so a load after write reproduces the exact values.
void write_csv(const MultiTaskDataset& ds, const std::string& path);

// Writes content to a temporary file in the target directory and renames it
// over the destination, so readers never observe a partial file.
void atomic_write_text(const std::string& path, const std::string& content);

// Shortest round-trip decimal form of a double (to_chars).
std::string format_double(double v);

}  // namespace invtrans
