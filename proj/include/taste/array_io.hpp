// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "taste/common.hpp"

#include <map>
#include <string>
#include <vector>

namespace taste {

// Array file layout: magic "TARR", version byte, rank byte, shape as
// uint32 little-endian per dim, then row-major float32 little-endian payload.
struct ArrayData {
    std::vector<uint32_t> shape;
    std::vector<float> data;

    size_t element_count() const {
        size_t n = 1;
        for (uint32_t s : shape) n *= s;
        return n;
    }
};

void write_array(const std::string& path, const ArrayData& a);
ArrayData read_array(const std::string& path);

// Matrix helpers (rank-2 arrays). Values round-trip through float32.
void write_array(const std::string& path, const Mat& m);
Mat read_array_mat(const std::string& path);

// Integer sequences stored as rank-1 float32 (exact for |v| < 2^24).
void write_array(const std::string& path, const std::vector<int>& v);
std::vector<int> read_array_ints(const std::string& path);

Mat array_to_mat(const ArrayData& a);
ArrayData mat_to_array(const Mat& m);

// Checkpoint layout: magic "TCKP", version byte, uint32 entry count, then
// per entry a uint16 name length, the name bytes, and an inline array blob
// in the same encoding as the array files. Writes are atomic
// (temp file + rename). Entry order is the map order, so identical content
// produces identical bytes.
void write_checkpoint(const std::string& path, const std::map<std::string, Mat>& entries);
std::map<std::string, Mat> read_checkpoint(const std::string& path);

} // namespace taste
