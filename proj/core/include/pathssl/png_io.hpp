#pragma once

#include <string>

#include "pathssl/patch.hpp"

namespace pathssl {

/// Writes a patch as an 8-bit sRGB PNG. Values are quantized with
/// round(v * 255); the patch itself is not modified.
void write_png(const std::string& path, const Patch& patch);

/// Reads an 8-bit RGB(A)/gray PNG into a Patch (values v/255).
/// Provenance fields are left default; callers fill them from manifests.
Patch read_png(const std::string& path);

} // namespace pathssl
