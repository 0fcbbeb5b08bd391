#include "pathssl/embeddings.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "pathssl/error.hpp"

namespace pathssl {

namespace {

constexpr char kMagic[5] = {'P', 'S', 'E', 'B', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in, const char* what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw DataError(std::string("embedding store: truncated file reading ") + what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_string(std::ostream& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, const char* what) {
    const std::uint32_t len = get_u32(in, what);
    std::string s(len, '\0');
    if (len > 0 && !in.read(s.data(), len))
        throw DataError(std::string("embedding store: truncated file reading ") + what);
    return s;
}

void put_floats(std::ostream& out, const std::vector<float>& v) {
    for (float f : v) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32(out, bits);
    }
}

void get_floats(std::istream& in, std::vector<float>& v, std::size_t count, const char* what) {
    v.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint32_t bits = get_u32(in, what);
        std::memcpy(&v[i], &bits, 4);
    }
}

} // namespace

std::string FeatureMode::name() const {
    switch (kind) {
        case Kind::cls_only: return "cls_only";
        case Kind::concat_center: return "concat_center(" + std::to_string(center_n) + ")";
        case Kind::center_only: return "center_only(" + std::to_string(center_n) + ")";
    }
    return "?";
}

FeatureMode FeatureMode::parse(const std::string& text) {
    if (text == "cls_only") return cls_only();
    for (const auto& [prefix, kind] :
         {std::pair<std::string, Kind>{"concat_center(", Kind::concat_center},
          std::pair<std::string, Kind>{"center_only(", Kind::center_only}}) {
        if (text.rfind(prefix, 0) == 0 && text.back() == ')') {
            const int n = std::stoi(text.substr(prefix.size(), text.size() - prefix.size() - 1));
            return {kind, n};
        }
    }
    throw DataError("unknown feature mode '" + text +
                    "' (expected cls_only | concat_center(n) | center_only(n))");
}

std::vector<double> center_pool(const std::vector<float>& tokens, int grid_side, int dim, int n) {
    if (grid_side < 2 || grid_side % 2 != 0)
        throw DataError("center_pool: grid side must be even and >= 2, got " +
                        std::to_string(grid_side));
    if (n < 2 || n > grid_side || n % 2 != 0)
        throw DataError("center_pool: n must be even and in [2, " + std::to_string(grid_side) +
                        "], got " + std::to_string(n));
    if (tokens.size() != static_cast<std::size_t>(grid_side) * grid_side * dim)
        throw DataError("center_pool: token buffer does not match grid dimensions");

    const int lo = grid_side / 2 - n / 2;
    const int hi = grid_side / 2 + n / 2; // exclusive
    std::vector<double> out(dim, 0.0);
    for (int r = lo; r < hi; ++r)
        for (int c = lo; c < hi; ++c) {
            const std::size_t base = (static_cast<std::size_t>(r) * grid_side + c) * dim;
            for (int j = 0; j < dim; ++j) out[j] += tokens[base + j];
        }
    const double count = static_cast<double>(n) * n;
    for (auto& v : out) v /= count;
    return out;
}

std::vector<double> center_pool(const EmbeddingRecord& record, int n) {
    if (!record.has_tokens())
        throw DataError("center_pool: record '" + record.patch_id + "' has no token grid");
    return center_pool(record.tokens, record.grid_side, static_cast<int>(record.cls.size()), n);
}

std::vector<double> compose_feature(const EmbeddingRecord& record, const FeatureMode& mode) {
    switch (mode.kind) {
        case FeatureMode::Kind::cls_only: {
            return {record.cls.begin(), record.cls.end()};
        }
        case FeatureMode::Kind::concat_center: {
            std::vector<double> out(record.cls.begin(), record.cls.end());
            const auto pooled = center_pool(record, mode.center_n);
            out.insert(out.end(), pooled.begin(), pooled.end());
            return out;
        }
        case FeatureMode::Kind::center_only:
            return center_pool(record, mode.center_n);
    }
    throw DataError("compose_feature: invalid mode");
}

std::size_t store_write(const std::string& path, const std::vector<EmbeddingRecord>& records) {
    std::uint32_t d = 0, g = 0;
    bool with_tokens = false;
    if (!records.empty()) {
        d = static_cast<std::uint32_t>(records.front().cls.size());
        with_tokens = records.front().has_tokens();
        g = with_tokens ? static_cast<std::uint32_t>(records.front().grid_side) : 0;
    }
    for (const auto& r : records) {
        if (r.cls.size() != d)
            throw DataError("store_write: inconsistent embedding dimension in record '" +
                            r.patch_id + "'");
        if (r.has_tokens() != with_tokens ||
            (with_tokens && (r.grid_side != static_cast<int>(g) ||
                             r.tokens.size() != static_cast<std::size_t>(g) * g * d)))
            throw DataError("store_write: inconsistent token grid in record '" + r.patch_id + "'");
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("store_write: cannot open '" + path + "'");
    out.write(kMagic, 5);
    put_u32(out, d);
    put_u32(out, g);
    put_u32(out, with_tokens ? 1u : 0u);
    for (const auto& r : records) {
        put_string(out, r.patch_id);
        put_string(out, r.slide_id);
        put_string(out, r.case_id);
        const unsigned char mag = static_cast<unsigned char>(r.magnification);
        out.write(reinterpret_cast<const char*>(&mag), 1);
        put_floats(out, r.cls);
        if (with_tokens) put_floats(out, r.tokens);
    }
    if (!out) throw DataError("store_write: write failure on '" + path + "'");
    return records.size();
}

std::vector<EmbeddingRecord> store_read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("store_read: cannot open '" + path + "'");
    char magic[5];
    if (!in.read(magic, 5) || std::memcmp(magic, kMagic, 5) != 0)
        throw DataError("store_read: '" + path + "' is not a PSEB1 store (expected magic \"PSEB1\")");
    const std::uint32_t d = get_u32(in, "dimension");
    const std::uint32_t g = get_u32(in, "grid side");
    const std::uint32_t flags = get_u32(in, "flags");
    const bool with_tokens = (flags & 1u) != 0;

    std::vector<EmbeddingRecord> records;
    for (;;) {
        // Peek one byte to detect a clean end of file before a record.
        int c = in.peek();
        if (c == std::char_traits<char>::eof()) break;
        EmbeddingRecord r;
        r.patch_id = get_string(in, "patch_id");
        r.slide_id = get_string(in, "slide_id");
        r.case_id = get_string(in, "case_id");
        unsigned char mag;
        if (!in.read(reinterpret_cast<char*>(&mag), 1))
            throw DataError("embedding store: truncated file reading magnification");
        if (mag > 3) throw DataError("embedding store: invalid magnification byte");
        r.magnification = static_cast<Magnification>(mag);
        get_floats(in, r.cls, d, "cls vector");
        if (with_tokens) {
            get_floats(in, r.tokens, static_cast<std::size_t>(g) * g * d, "token grid");
            r.grid_side = static_cast<int>(g);
        }
        records.push_back(std::move(r));
    }
    return records;
}

void store_export_jsonl(const std::string& path, const std::vector<EmbeddingRecord>& records) {
    std::ofstream out(path);
    if (!out) throw DataError("store_export_jsonl: cannot open '" + path + "'");
    for (const auto& r : records) {
        nlohmann::json j;
        j["patch_id"] = r.patch_id;
        j["slide_id"] = r.slide_id;
        j["case_id"] = r.case_id;
        j["magnification"] = to_string(r.magnification);
        j["cls"] = r.cls;
        out << j.dump() << "\n";
    }
}

} // namespace pathssl
