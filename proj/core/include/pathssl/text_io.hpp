#pragma once

#include <string>
#include <vector>

#include "pathssl/patch.hpp"

namespace pathssl {

/// One line of a corpus manifest: the provenance and label of a patch.
struct ManifestRow {
    std::string patch_id;
    std::string slide_id;
    std::string case_id;
    Magnification magnification = Magnification::x20;
    std::string label;
    std::string path; // PNG location, may be empty for in-memory corpora
};

/// Tab-separated table with a header line. Blank lines are skipped.
struct TsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const; // -1 when absent
    int require_column(const std::string& name, const std::string& context) const;
};

TsvTable read_tsv(const std::string& path);
void write_tsv(const std::string& path, const TsvTable& table);

/// Manifest column order: patch_id, slide_id, case_id, magnification, label, path.
std::vector<ManifestRow> read_manifest(const std::string& path);
void write_manifest(const std::string& path, const std::vector<ManifestRow>& rows);

} // namespace pathssl
