#include "pathssl/text_io.hpp"

#include <fstream>
#include <sstream>

#include "pathssl/error.hpp"

namespace pathssl {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
}

} // namespace

int TsvTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    return -1;
}

int TsvTable::require_column(const std::string& name, const std::string& context) const {
    const int c = column(name);
    if (c < 0) throw DataError(context + ": missing required column '" + name + "'");
    return c;
}

TsvTable read_tsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("read_tsv: cannot open '" + path + "'");
    TsvTable table;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_tabs(line);
        if (!have_header) {
            table.header = std::move(fields);
            have_header = true;
        } else {
            if (fields.size() != table.header.size())
                throw DataError("read_tsv: '" + path + "' row with " +
                                std::to_string(fields.size()) + " fields, header has " +
                                std::to_string(table.header.size()));
            table.rows.push_back(std::move(fields));
        }
    }
    if (!have_header) throw DataError("read_tsv: '" + path + "' is empty");
    return table;
}

void write_tsv(const std::string& path, const TsvTable& table) {
    std::ofstream out(path);
    if (!out) throw DataError("write_tsv: cannot open '" + path + "'");
    auto write_row = [&](const std::vector<std::string>& row) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out << '\t';
            out << row[i];
        }
        out << '\n';
    };
    write_row(table.header);
    for (const auto& row : table.rows) write_row(row);
}

std::vector<ManifestRow> read_manifest(const std::string& path) {
    const TsvTable t = read_tsv(path);
    const std::string ctx = "manifest '" + path + "'";
    const int c_patch = t.require_column("patch_id", ctx);
    const int c_slide = t.require_column("slide_id", ctx);
    const int c_case = t.require_column("case_id", ctx);
    const int c_mag = t.require_column("magnification", ctx);
    const int c_label = t.require_column("label", ctx);
    const int c_path = t.column("path");
    std::vector<ManifestRow> rows;
    rows.reserve(t.rows.size());
    for (const auto& r : t.rows) {
        ManifestRow m;
        m.patch_id = r[c_patch];
        m.slide_id = r[c_slide];
        m.case_id = r[c_case];
        m.magnification = magnification_from_string(r[c_mag]);
        m.label = r[c_label];
        if (c_path >= 0) m.path = r[c_path];
        rows.push_back(std::move(m));
    }
    return rows;
}

void write_manifest(const std::string& path, const std::vector<ManifestRow>& rows) {
    TsvTable t;
    t.header = {"patch_id", "slide_id", "case_id", "magnification", "label", "path"};
    t.rows.reserve(rows.size());
    for (const auto& r : rows)
        t.rows.push_back({r.patch_id, r.slide_id, r.case_id, to_string(r.magnification), r.label,
                          r.path});
    write_tsv(path, t);
}

} // namespace pathssl
