#include "embedkit/store.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace embedkit {

namespace {

[[noreturn]] void fail(const std::string& path, std::size_t line, const std::string& what) {
    throw std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw std::runtime_error("read error: " + path);
    return data;
}

// Splits into lines, tolerating CRLF and a missing trailing newline.
std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t nl = text.find('\n', start);
        std::string_view line = (nl == std::string_view::npos) ? text.substr(start)
                                                               : text.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        if (nl == std::string_view::npos) break;
        start = nl + 1;
    }
    // a trailing newline produces one empty phantom line; drop it
    if (!lines.empty() && lines.back().empty()) lines.pop_back();
    return lines;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t tab = line.find('\t', start);
        if (tab == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
    return fields;
}

double parse_double(std::string_view s, const std::string& path, std::size_t line,
                    const char* what) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        fail(path, line, std::string("malformed ") + what + " '" + std::string(s) + "'");
    return v;
}

float parse_float(std::string_view s, const std::string& path, std::size_t line) {
    float v = 0.0f;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        fail(path, line, "malformed float '" + std::string(s) + "'");
    return v;
}

std::size_t parse_index(std::string_view s, const std::string& path, std::size_t line,
                        const char* what) {
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        fail(path, line, std::string("malformed ") + what + " '" + std::string(s) + "'");
    return v;
}

bool skippable(std::string_view line) { return line.empty() || line.front() == '#'; }

// --- little-endian primitives (host-order independent) ---

void put_u32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

constexpr char kMagic[4] = {'E', 'M', 'B', 'V'};
constexpr std::uint32_t kVersion = 1;

EmbeddingMatrix load_binary(const std::string& path) {
    const std::string data = read_file(path);
    const auto* p = reinterpret_cast<const unsigned char*>(data.data());
    if (data.size() < 16 || std::memcmp(data.data(), kMagic, 4) != 0)
        throw std::runtime_error(path + ": malformed header (bad magic or truncated)");
    const std::uint32_t version = get_u32(p + 4);
    if (version != kVersion)
        throw std::runtime_error(path + ": unsupported version " + std::to_string(version));
    const std::uint32_t count = get_u32(p + 8);
    const std::uint32_t dims = get_u32(p + 12);
    if (dims == 0) throw std::runtime_error(path + ": malformed header (dims = 0)");

    EmbeddingMatrix m;
    m.dims = dims;
    m.ids.reserve(count);

    std::size_t offset = 16;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::size_t nul = data.find('\0', offset);
        if (nul == std::string::npos)
            throw std::runtime_error(path + ": truncated id table at row " + std::to_string(i + 1));
        m.ids.emplace_back(data.substr(offset, nul - offset));
        offset = nul + 1;
    }

    const std::size_t want = static_cast<std::size_t>(count) * dims * 4;
    if (data.size() - offset != want)
        throw std::runtime_error(path + ": value section has " +
                                 std::to_string(data.size() - offset) + " bytes, expected " +
                                 std::to_string(want));

    m.values.resize(static_cast<std::size_t>(count) * dims);
    for (std::size_t i = 0; i < m.values.size(); ++i) {
        const std::uint32_t bits = get_u32(p + offset + i * 4);
        const float v = std::bit_cast<float>(bits);
        if (!std::isfinite(v))
            throw std::runtime_error(path + ": non-finite value at row " +
                                     std::to_string(i / dims + 1));
        m.values[i] = v;
    }
    validate_matrix(m);
    return m;
}

EmbeddingMatrix load_tsv(const std::string& path) {
    const std::string data = read_file(path);
    const auto lines = split_lines(data);
    if (lines.empty()) throw std::runtime_error(path + ": empty embedding file");

    EmbeddingMatrix m;
    for (std::size_t li = 0; li < lines.size(); ++li) {
        const auto line = lines[li];
        const std::size_t tab = line.find('\t');
        if (line.empty() || tab == std::string_view::npos)
            fail(path, li + 1, "expected 'id<TAB>values'");
        const std::string_view id = line.substr(0, tab);
        if (id.empty()) fail(path, li + 1, "empty id");

        std::vector<float> row;
        std::string_view rest = line.substr(tab + 1);
        std::size_t pos = 0;
        while (pos < rest.size()) {
            while (pos < rest.size() && rest[pos] == ' ') ++pos;
            if (pos >= rest.size()) break;
            std::size_t end = rest.find(' ', pos);
            if (end == std::string_view::npos) end = rest.size();
            row.push_back(parse_float(rest.substr(pos, end - pos), path, li + 1));
            pos = end;
        }
        if (row.empty()) fail(path, li + 1, "row has no values");
        if (m.dims == 0) m.dims = row.size();
        if (row.size() != m.dims)
            fail(path, li + 1,
                 "row has " + std::to_string(row.size()) + " values, expected " +
                     std::to_string(m.dims));
        for (float v : row)
            if (!std::isfinite(v)) fail(path, li + 1, "non-finite value");

        m.ids.emplace_back(id);
        m.values.insert(m.values.end(), row.begin(), row.end());
    }
    validate_matrix(m);
    return m;
}

std::string format_value(float v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
    return buf;
}

}  // namespace

Format detect_format(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    char head[4] = {};
    in.read(head, 4);
    return (in.gcount() == 4 && std::memcmp(head, kMagic, 4) == 0) ? Format::Binary : Format::Tsv;
}

EmbeddingMatrix load_embeddings(const std::string& path, Format format) {
    return format == Format::Binary ? load_binary(path) : load_tsv(path);
}

void save_embeddings(const EmbeddingMatrix& m, const std::string& path, Format format) {
    validate_matrix(m);
    std::string out;
    if (format == Format::Binary) {
        out.reserve(16 + m.values.size() * 4 + m.rows() * 8);
        out.append(kMagic, 4);
        put_u32(out, kVersion);
        put_u32(out, static_cast<std::uint32_t>(m.rows()));
        put_u32(out, static_cast<std::uint32_t>(m.dims));
        for (const auto& id : m.ids) {
            out.append(id);
            out.push_back('\0');
        }
        for (float v : m.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
    } else {
        for (std::size_t i = 0; i < m.rows(); ++i) {
            out.append(m.ids[i]);
            out.push_back('\t');
            const auto row = m.row(i);
            for (std::size_t j = 0; j < row.size(); ++j) {
                if (j) out.push_back(' ');
                out.append(format_value(row[j]));
            }
            out.push_back('\n');
        }
    }
    atomic_write_file(path, out);
}

RelevanceSet load_relevance(const std::string& path) {
    const std::string data = read_file(path);
    const auto lines = split_lines(data);

    RelevanceSet rels;
    std::unordered_map<std::string, std::unordered_set<std::string>> seen;
    for (std::size_t li = 0; li < lines.size(); ++li) {
        if (skippable(lines[li])) continue;
        const auto fields = split_tabs(lines[li]);
        if (fields.size() != 2 && fields.size() != 3)
            fail(path, li + 1, "expected 'query_id<TAB>doc_id[<TAB>gain]'");
        const std::string query(fields[0]);
        const std::string doc(fields[1]);
        if (query.empty() || doc.empty()) fail(path, li + 1, "empty id");
        const double gain =
            fields.size() == 3 ? parse_double(fields[2], path, li + 1, "gain") : 1.0;
        if (!std::isfinite(gain) || gain < 0.0) fail(path, li + 1, "gain must be >= 0");

        auto [it, inserted] = rels.entries.try_emplace(query);
        if (inserted) rels.query_order.push_back(query);
        if (!seen[query].insert(doc).second)
            fail(path, li + 1, "duplicate pair (" + query + ", " + doc + ")");
        it->second.emplace_back(doc, gain);
    }
    if (rels.query_order.empty()) throw std::runtime_error(path + ": no relevance entries");

    for (const auto& q : rels.query_order) {
        bool any_positive = false;
        for (const auto& [doc, gain] : rels.entries.at(q)) any_positive |= gain > 0.0;
        if (!any_positive)
            throw std::runtime_error(path + ": query '" + q + "' has no entry with gain > 0");
    }
    return rels;
}

std::vector<Listing> load_listings(const std::string& path, const EmbeddingMatrix& queries,
                                   const EmbeddingMatrix& docs) {
    if (queries.dims != docs.dims)
        throw std::invalid_argument("listings: query dims " + std::to_string(queries.dims) +
                                    " != doc dims " + std::to_string(docs.dims));
    const auto query_index = build_id_index(queries);
    const auto doc_index = build_id_index(docs);

    const std::string data = read_file(path);
    const auto lines = split_lines(data);

    struct Row {
        std::size_t doc_row;
        std::string doc_id;
        std::size_t position;
        double gain;
    };
    std::vector<std::string> order;
    std::unordered_map<std::string, std::vector<Row>> grouped;
    std::unordered_map<std::string, std::unordered_set<std::size_t>> positions;

    for (std::size_t li = 0; li < lines.size(); ++li) {
        if (skippable(lines[li])) continue;
        const auto fields = split_tabs(lines[li]);
        if (fields.size() != 4)
            fail(path, li + 1, "expected 'listing_id<TAB>doc_id<TAB>position<TAB>gain'");
        const std::string listing_id(fields[0]);
        const std::string doc_id(fields[1]);
        const std::size_t position = parse_index(fields[2], path, li + 1, "position");
        const double gain = parse_double(fields[3], path, li + 1, "gain");
        if (!std::isfinite(gain) || gain < 0.0) fail(path, li + 1, "gain must be >= 0");

        if (!query_index.contains(listing_id))
            fail(path, li + 1, "listing id '" + listing_id + "' not found in query embeddings");
        const auto doc_it = doc_index.find(doc_id);
        if (doc_it == doc_index.end())
            fail(path, li + 1, "doc id '" + doc_id + "' not found in doc embeddings");
        if (!positions[listing_id].insert(position).second)
            fail(path, li + 1,
                 "duplicate position " + std::to_string(position) + " in listing '" + listing_id +
                     "'");

        auto [it, inserted] = grouped.try_emplace(listing_id);
        if (inserted) order.push_back(listing_id);
        it->second.push_back({doc_it->second, doc_id, position, gain});
    }
    if (order.empty()) throw std::runtime_error(path + ": no listing entries");

    std::vector<Listing> listings;
    listings.reserve(order.size());
    for (const auto& listing_id : order) {
        auto& rows = grouped.at(listing_id);
        std::sort(rows.begin(), rows.end(),
                  [](const Row& a, const Row& b) { return a.position < b.position; });
        Listing l;
        l.query_id = listing_id;
        l.query_row = queries.row(query_index.at(listing_id));
        l.candidates.reserve(rows.size());
        for (const auto& r : rows)
            l.candidates.push_back({r.doc_id, docs.row(r.doc_row), r.gain});
        listings.push_back(std::move(l));
    }
    return listings;
}

std::vector<TripletRecord> load_triplet_records(const std::string& path) {
    const std::string data = read_file(path);
    const auto lines = split_lines(data);

    std::vector<TripletRecord> records;
    std::unordered_set<std::string> seen;
    for (std::size_t li = 0; li < lines.size(); ++li) {
        if (skippable(lines[li])) continue;
        const auto fields = split_tabs(lines[li]);
        if (fields.size() != 4)
            fail(path, li + 1,
                 "expected 'triplet_id<TAB>anchor_id<TAB>positive_id<TAB>negative_id'");
        TripletRecord rec{std::string(fields[0]), std::string(fields[1]), std::string(fields[2]),
                          std::string(fields[3])};
        if (rec.id.empty() || rec.anchor_id.empty() || rec.positive_id.empty() ||
            rec.negative_id.empty())
            fail(path, li + 1, "empty id");
        if (!seen.insert(rec.id).second) fail(path, li + 1, "duplicate triplet id '" + rec.id + "'");
        records.push_back(std::move(rec));
    }
    return records;
}

TripletSet load_triplets(const std::string& path, const EmbeddingMatrix& embeddings) {
    const auto records = load_triplet_records(path);
    const auto index = build_id_index(embeddings);

    TripletSet ts;
    ts.anchors.dims = ts.positives.dims = ts.hard_negatives.dims = embeddings.dims;
    ts.anchors.normalized = ts.positives.normalized = ts.hard_negatives.normalized =
        embeddings.normalized;
    ts.triplet_ids.reserve(records.size());

    auto gather = [&](const std::string& id, EmbeddingMatrix& dest, const std::string& trip) {
        const auto it = index.find(id);
        if (it == index.end())
            throw std::runtime_error(path + ": triplet '" + trip + "' references unknown id '" +
                                     id + "'");
        const auto row = embeddings.row(it->second);
        dest.values.insert(dest.values.end(), row.begin(), row.end());
        dest.ids.push_back(trip);
    };

    for (const auto& rec : records) {
        ts.triplet_ids.push_back(rec.id);
        gather(rec.anchor_id, ts.anchors, rec.id);
        gather(rec.positive_id, ts.positives, rec.id);
        gather(rec.negative_id, ts.hard_negatives, rec.id);
    }
    return ts;
}

std::vector<ScoredTranslation> load_scores(const std::string& path) {
    const std::string data = read_file(path);
    const auto lines = split_lines(data);

    std::vector<ScoredTranslation> scores;
    for (std::size_t li = 0; li < lines.size(); ++li) {
        if (skippable(lines[li])) continue;
        const auto fields = split_tabs(lines[li]);
        if (fields.size() != 3) fail(path, li + 1, "expected 'sentence_id<TAB>system<TAB>score'");
        ScoredTranslation s{std::string(fields[0]), std::string(fields[1]),
                            parse_double(fields[2], path, li + 1, "score")};
        if (s.sentence_id.empty() || s.system.empty()) fail(path, li + 1, "empty id");
        if (!std::isfinite(s.score)) fail(path, li + 1, "non-finite score");
        scores.push_back(std::move(s));
    }
    if (scores.empty()) throw std::runtime_error(path + ": no score entries");
    return scores;
}

void atomic_write_file(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write file: " + tmp);
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw std::runtime_error("write error: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        std::remove(tmp.c_str());
        throw std::runtime_error("cannot rename " + tmp + " to " + path);
    }
}

}  // namespace embedkit
