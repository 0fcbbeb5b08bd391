#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pathssl/patch.hpp"

namespace pathssl {

/// Class-token vector plus optional token grid for one patch at one
/// magnification. Token grids are g x g x d, row-major by (row, col, dim).
struct EmbeddingRecord {
    std::string patch_id;
    std::string slide_id;
    std::string case_id;
    Magnification magnification = Magnification::x20;
    std::vector<float> cls;               // length d
    std::vector<float> tokens;            // empty, or g*g*d
    int grid_side = 0;                    // g; 0 when tokens absent

    bool has_tokens() const { return !tokens.empty(); }
};

/// How to build a probe feature from a record.
struct FeatureMode {
    enum class Kind { cls_only, concat_center, center_only };
    Kind kind = Kind::cls_only;
    int center_n = 2; // even, in [2, g]; ignored for cls_only

    static FeatureMode cls_only() { return {Kind::cls_only, 0}; }
    static FeatureMode concat_center(int n) { return {Kind::concat_center, n}; }
    static FeatureMode center_only(int n) { return {Kind::center_only, n}; }

    std::string name() const;
    static FeatureMode parse(const std::string& text);
};

/// Mean of the center n x n block of a g x g x d token grid, i.e. rows and
/// columns in [g/2 - n/2, g/2 + n/2). Requires n and g even, 2 <= n <= g.
std::vector<double> center_pool(const std::vector<float>& tokens, int grid_side, int dim, int n);
std::vector<double> center_pool(const EmbeddingRecord& record, int n);

/// cls_only -> cls; concat_center(n) -> cls ++ center_pool(n);
/// center_only(n) -> center_pool(n).
std::vector<double> compose_feature(const EmbeddingRecord& record, const FeatureMode& mode);

/// PSEB1 binary embedding store.
///
/// Layout (all integers little-endian):
///   magic   5 bytes  "PSEB1"
///   d       u32      embedding dimension
///   g       u32      token grid side (0 when the store has no token grids)
///   flags   u32      bit 0: records carry token grids
/// then per record:
///   patch_id, slide_id, case_id   each u32 length + UTF-8 bytes
///   magnification                 u8 (0=5x 1=10x 2=20x 3=40x)
///   cls                           d * f32
///   tokens                        g*g*d * f32, only when flag bit 0 is set
std::size_t store_write(const std::string& path, const std::vector<EmbeddingRecord>& records);
std::vector<EmbeddingRecord> store_read(const std::string& path);

/// Line-delimited JSON export (ids, magnification, cls vector) for
/// interoperability with non-binary consumers.
void store_export_jsonl(const std::string& path, const std::vector<EmbeddingRecord>& records);

} // namespace pathssl
