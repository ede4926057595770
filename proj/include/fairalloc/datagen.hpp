#pragma once

// SimRec synthetic relevance generator and file ingestion.
//
// Relevance CSV: one row per consumer, n comma-separated values, optional
// header row. Raw format: little-endian float32 row-major with a sidecar text
// file "<path>.hdr" holding "m <rows>\nn <cols>\n". Groups CSV: consumer,group.
// Values CSV: producer,value. Headers are optional in every CSV.

#include "fairalloc/core.hpp"
#include "fairalloc/rng.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace fairalloc {

enum class ItemOrder {
    Shared,      // item j sits at x_j = j/(n-1) for every consumer
    PerConsumer  // each consumer sees the decay curve over its own seeded item permutation
};

struct SimRecConfig {
    std::size_t m = 1000;
    std::size_t n = 1000;
    std::size_t groups = 10;
    double zipf_exponent = 1.0;
    double noise_sigma = 0.2;
    double clip_low = 0.1;
    double clip_high = 1.0;
    std::vector<double> beta;  // per group; empty means 20/(1+g)
    ItemOrder item_order = ItemOrder::Shared;
    std::uint64_t seed = 0;

    double beta_of(std::size_t g) const {
        return beta.empty() ? 20.0 / (1.0 + static_cast<double>(g)) : beta[g];
    }

    void validate() const {
        if (m < 1 || n < 1) throw InputError("simrec: m and n must be >= 1");
        if (groups < 1) throw InputError("simrec: G must be >= 1");
        if (groups > m)
            throw InputError("simrec: G=" + std::to_string(groups) + " exceeds m=" + std::to_string(m));
        if (!(clip_low < clip_high)) throw InputError("simrec: clip_low must be < clip_high");
        if (clip_low < 0.0 || clip_high > 1.0) throw InputError("simrec: clip bounds must lie in [0,1]");
        if (!(noise_sigma >= 0.0)) throw InputError("simrec: noise_sigma must be >= 0");
        if (!(zipf_exponent >= 0.0)) throw InputError("simrec: zipf_exponent must be >= 0");
        if (!beta.empty() && beta.size() != groups)
            throw InputError("simrec: beta schedule needs one entry per group");
        for (std::size_t g = 0; g < groups; ++g)
            if (!(beta_of(g) > 0.0)) throw InputError("simrec: every beta must be > 0");
    }
};

/// Group sizes: one member each, the remaining m-G split in proportion to
/// (g+1)^-s by largest remainder (ties to the lower group).
inline std::vector<std::size_t> zipf_group_sizes(std::size_t m, std::size_t groups, double exponent) {
    if (groups < 1 || groups > m) throw InputError("zipf_group_sizes: requires 1 <= G <= m");
    std::vector<double> weight(groups);
    for (std::size_t g = 0; g < groups; ++g) weight[g] = std::pow(static_cast<double>(g + 1), -exponent);
    const double total = std::accumulate(weight.begin(), weight.end(), 0.0);
    const std::size_t spare = m - groups;
    std::vector<std::size_t> sizes(groups, 1);
    std::vector<double> remainder(groups);
    std::size_t given = 0;
    for (std::size_t g = 0; g < groups; ++g) {
        const double quota = static_cast<double>(spare) * weight[g] / total;
        const auto whole = static_cast<std::size_t>(std::floor(quota));
        sizes[g] += whole;
        given += whole;
        remainder[g] = quota - static_cast<double>(whole);
    }
    std::vector<std::size_t> order(groups);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t q = 0; given < spare; ++q, ++given) ++sizes[order[q % groups]];
    return sizes;
}

struct SimRecData {
    RelevanceMatrix rho;
    GroupPartition groups;
};

/// rho_ij = clip(1 - log(1 + beta_g x) / log(1 + beta_g) + eps, low, high),
/// eps ~ N(0, sigma^2) per entry from the substream (seed, i).
inline SimRecData gen_simrec(const SimRecConfig& cfg) {
    cfg.validate();
    const auto sizes = zipf_group_sizes(cfg.m, cfg.groups, cfg.zipf_exponent);
    std::vector<int> labels;
    labels.reserve(cfg.m);
    for (std::size_t g = 0; g < sizes.size(); ++g) labels.insert(labels.end(), sizes[g], static_cast<int>(g));

    Matrix rho(cfg.m, cfg.n, 0.0);
    std::vector<double> x(cfg.n);
    for (std::size_t j = 0; j < cfg.n; ++j)
        x[j] = cfg.n == 1 ? 0.0 : static_cast<double>(j) / static_cast<double>(cfg.n - 1);
    for (std::size_t i = 0; i < cfg.m; ++i) {
        const auto g = static_cast<std::size_t>(labels[i]);
        const double beta = cfg.beta_of(g);
        const double scale = std::log1p(beta);
        std::vector<std::size_t> rank(cfg.n);
        std::iota(rank.begin(), rank.end(), std::size_t{0});
        if (cfg.item_order == ItemOrder::PerConsumer)
            rank = rng::permutation(cfg.n, rng::substream(cfg.seed, i, std::uint64_t{1}));
        rng::Stream noise(rng::substream(cfg.seed, i));
        for (std::size_t j = 0; j < cfg.n; ++j) {
            const double base = 1.0 - std::log1p(beta * x[rank[j]]) / scale;
            const double v = base + cfg.noise_sigma * noise.normal();
            rho(i, j) = std::clamp(v, cfg.clip_low, cfg.clip_high);
        }
    }
    return {RelevanceMatrix(std::move(rho)), GroupPartition(std::move(labels))};
}

enum class ValueMode { InversePopularity, File };

/// v_j = 1 / (1 + number of consumers whose top-k contains j).
inline ProducerValues gen_values_inverse_popularity(const RelevanceMatrix& rho, int k) {
    if (k < 1 || static_cast<std::size_t>(k) > rho.producers())
        throw InputError("gen_values: requires 1 <= k <= n");
    std::vector<double> count(rho.producers(), 0.0);
    for (std::size_t i = 0; i < rho.consumers(); ++i)
        for (std::size_t j : top_k_indices(rho.row(i), static_cast<std::size_t>(k))) count[j] += 1.0;
    for (double& c : count) c = 1.0 / (1.0 + c);
    return ProducerValues(std::move(count));
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

namespace io {

inline std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline bool parse_double(std::string_view s, double& out) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
    return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        cells.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                           : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return cells;
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        lines.push_back(line);
    }
    return lines;
}

/// True if the first cell of a line is not a number (a header row).
inline bool is_header(std::string_view line) {
    double v;
    return !parse_double(split_csv(line).front(), v);
}

inline std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    return out;
}

inline bool is_raw_path(const std::filesystem::path& p) {
    const auto ext = p.extension().string();
    return ext == ".f32" || ext == ".bin" || ext == ".raw";
}

inline std::filesystem::path raw_header_path(const std::filesystem::path& p) {
    return std::filesystem::path(p.string() + ".hdr");
}

} // namespace io

inline RelevanceMatrix load_relevance_csv(const std::filesystem::path& path) {
    const auto lines = io::read_lines(path);
    std::size_t first = 0;
    if (!lines.empty() && io::is_header(lines.front())) first = 1;
    if (lines.size() <= first) throw InputError(path.string() + ": no relevance rows");
    const std::size_t m = lines.size() - first;
    const std::size_t n = io::split_csv(lines[first]).size();
    Matrix rho(m, n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const auto cells = io::split_csv(lines[first + i]);
        if (cells.size() != n)
            throw InputError(path.string() + ": row " + std::to_string(i) + " has " +
                             std::to_string(cells.size()) + " columns, expected " + std::to_string(n));
        for (std::size_t j = 0; j < n; ++j) {
            double v;
            if (!io::parse_double(cells[j], v))
                throw InputError(path.string() + ": non-numeric cell at (" + std::to_string(i) + "," +
                                 std::to_string(j) + ")");
            rho(i, j) = v;
        }
    }
    return RelevanceMatrix(std::move(rho));
}

inline RelevanceMatrix load_relevance_raw(const std::filesystem::path& path) {
    std::ifstream hdr(io::raw_header_path(path));
    if (!hdr) throw InputError("missing sidecar header " + io::raw_header_path(path).string());
    std::string key;
    std::size_t m = 0, n = 0;
    while (hdr >> key) {
        if (key == "m") hdr >> m;
        else if (key == "n") hdr >> n;
        else throw InputError("unknown key '" + key + "' in " + io::raw_header_path(path).string());
    }
    if (m == 0 || n == 0) throw InputError("sidecar header must give m and n");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    std::vector<unsigned char> buf(m * n * 4);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(in.gcount()) != buf.size())
        throw InputError(path.string() + ": expected " + std::to_string(m * n) + " float32 values");
    if (in.peek() != std::char_traits<char>::eof())
        throw InputError(path.string() + ": trailing data after " + std::to_string(m * n) + " values");
    Matrix rho(m, n, 0.0);
    for (std::size_t q = 0; q < m * n; ++q) {
        std::uint32_t bits = std::uint32_t{buf[4 * q]} | std::uint32_t{buf[4 * q + 1]} << 8 |
                             std::uint32_t{buf[4 * q + 2]} << 16 | std::uint32_t{buf[4 * q + 3]} << 24;
        rho.flat()[q] = static_cast<double>(std::bit_cast<float>(bits));
    }
    return RelevanceMatrix(std::move(rho));
}

/// Format chosen by extension: .f32/.bin/.raw are raw float32, anything else CSV.
inline RelevanceMatrix load_relevance(const std::filesystem::path& path) {
    return io::is_raw_path(path) ? load_relevance_raw(path) : load_relevance_csv(path);
}

/// CSV with shortest round-trip formatting, so a reload is bit-exact.
inline void save_relevance_csv(const RelevanceMatrix& rho, const std::filesystem::path& path) {
    auto out = io::open_out(path);
    for (std::size_t i = 0; i < rho.consumers(); ++i) {
        for (std::size_t j = 0; j < rho.producers(); ++j) {
            if (j) out << ',';
            out << io::format_double(rho(i, j));
        }
        out << '\n';
    }
}

/// Raw float32 (entries are narrowed to float).
inline void save_relevance_raw(const RelevanceMatrix& rho, const std::filesystem::path& path) {
    auto out = io::open_out(path);
    for (double v : rho.scores().flat()) {
        const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
        const char b[4] = {static_cast<char>(bits & 0xFF), static_cast<char>((bits >> 8) & 0xFF),
                           static_cast<char>((bits >> 16) & 0xFF), static_cast<char>((bits >> 24) & 0xFF)};
        out.write(b, 4);
    }
    auto hdr = io::open_out(io::raw_header_path(path));
    hdr << "m " << rho.consumers() << "\nn " << rho.producers() << '\n';
}

inline void save_relevance(const RelevanceMatrix& rho, const std::filesystem::path& path) {
    if (io::is_raw_path(path)) save_relevance_raw(rho, path);
    else save_relevance_csv(rho, path);
}

namespace io {

/// Two-column "index,value" CSV covering indices 0..count-1 exactly once.
inline std::vector<double> load_indexed(const std::filesystem::path& path, std::size_t count,
                                        const std::string& what) {
    const auto lines = read_lines(path);
    std::size_t first = 0;
    if (!lines.empty() && is_header(lines.front())) first = 1;
    std::vector<double> out(count, 0.0);
    std::vector<char> seen(count, 0);
    for (std::size_t l = first; l < lines.size(); ++l) {
        const auto cells = split_csv(lines[l]);
        const std::string where = path.string() + " line " + std::to_string(l + 1);
        if (cells.size() != 2) throw InputError(where + ": expected 2 columns");
        double idx, v;
        if (!parse_double(cells[0], idx) || !parse_double(cells[1], v))
            throw InputError(where + ": non-numeric cell");
        if (idx < 0 || idx != std::floor(idx) || idx >= static_cast<double>(count))
            throw InputError(where + ": " + what + " index out of range");
        const auto i = static_cast<std::size_t>(idx);
        if (seen[i]) throw InputError(where + ": duplicate " + what + " " + std::to_string(i));
        seen[i] = 1;
        out[i] = v;
    }
    for (std::size_t i = 0; i < count; ++i)
        if (!seen[i]) throw InputError(path.string() + ": missing " + what + " " + std::to_string(i));
    return out;
}

} // namespace io

inline GroupPartition load_groups(const std::filesystem::path& path, std::size_t m) {
    const auto raw = io::load_indexed(path, m, "consumer");
    std::vector<int> labels(m);
    for (std::size_t i = 0; i < m; ++i) {
        if (raw[i] != std::floor(raw[i]) || raw[i] < 0)
            throw InputError(path.string() + ": group label of consumer " + std::to_string(i) +
                             " is not a nonnegative integer");
        labels[i] = static_cast<int>(raw[i]);
    }
    return GroupPartition(std::move(labels));
}

inline ProducerValues load_values(const std::filesystem::path& path, std::size_t n) {
    return ProducerValues(io::load_indexed(path, n, "producer"));
}

inline void save_groups(const GroupPartition& groups, const std::filesystem::path& path) {
    auto out = io::open_out(path);
    out << "consumer,group\n";
    for (std::size_t i = 0; i < groups.consumers(); ++i) out << i << ',' << groups.label(i) << '\n';
}

inline void save_values(const ProducerValues& values, const std::filesystem::path& path) {
    auto out = io::open_out(path);
    out << "producer,value\n";
    for (std::size_t j = 0; j < values.producers(); ++j)
        out << j << ',' << io::format_double(values[j]) << '\n';
}

} // namespace fairalloc
