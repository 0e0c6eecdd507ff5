#include "rtb/bidlog.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rtb/errors.hpp"

namespace rtb::io {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

bool parse_u64(const std::string& s, std::uint64_t& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtoull(s.c_str(), &end, 10);
    return end && *end == '\0';
}

bool parse_i64(const std::string& s, std::int64_t& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtoll(s.c_str(), &end, 10);
    return end && *end == '\0';
}

}  // namespace

LogSchema LogSchema::parse(const std::string& decl, std::uint32_t dimension, int b_max) {
    LogSchema schema;
    schema.feature_dimension = dimension;
    schema.b_max = b_max;
    for (const auto& role : split(decl, ',')) {
        if (role != "id" && role != "click" && role != "price" && role != "feats" &&
            role != "feat" && role != "skip")
            throw ConfigError("log schema: unknown column role '" + role + "'");
        schema.roles.push_back(role);
    }
    schema.validate();
    return schema;
}

void LogSchema::validate() const {
    if (roles.empty()) throw ConfigError("log schema: no columns declared");
    if (feature_dimension == 0) throw ConfigError("log schema: zero feature dimension");
    for (const char* unique : {"id", "click", "price", "feats"})
        if (std::count(roles.begin(), roles.end(), unique) > 1)
            throw ConfigError(std::string("log schema: duplicate role ") + unique);
}

LogSchema native_schema(std::uint32_t dimension, int b_max) {
    LogSchema schema;
    schema.roles = {"id", "click", "price", "feats"};
    schema.feature_dimension = dimension;
    schema.b_max = b_max;
    return schema;
}

std::vector<BidRequest> parse_bid_log(const std::string& path, const LogSchema& schema,
                                      ParseStats* stats_out) {
    schema.validate();
    std::ifstream in(path);
    if (!in) throw InputError("cannot open bid log: " + path);

    ParseStats stats;
    std::vector<BidRequest> out;
    std::string line;
    std::uint64_t fallback_id = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        ++stats.lines;
        const auto cols = split(line, '\t');
        if (cols.size() != schema.roles.size()) {
            ++stats.malformed;
            continue;
        }
        BidRequest req;
        req.auction_id = fallback_id;
        req.features.dimension = schema.feature_dimension;
        bool ok = true;
        for (std::size_t c = 0; c < cols.size() && ok; ++c) {
            const std::string& role = schema.roles[c];
            const std::string& cell = cols[c];
            if (role == "skip") continue;
            if (role == "id") {
                std::uint64_t v;
                ok = parse_u64(cell, v);
                if (ok) req.auction_id = v;
            } else if (role == "click") {
                std::int64_t v;
                ok = parse_i64(cell, v) && (v == 0 || v == 1);
                if (ok) req.click_label = static_cast<int>(v);
            } else if (role == "price") {
                std::int64_t v;
                ok = parse_i64(cell, v) && v >= 1 && v <= schema.b_max;
                if (ok) req.logged_market_price = v;
            } else if (role == "feats") {
                for (const auto& tok : split(cell, ',')) {
                    if (tok.empty()) continue;
                    std::uint64_t v;
                    if (!parse_u64(tok, v) || v >= schema.feature_dimension) {
                        ok = false;
                        break;
                    }
                    req.features.indices.push_back(static_cast<std::uint32_t>(v));
                }
            } else if (role == "feat") {
                req.features.indices.push_back(hash_feature("c" + std::to_string(c), cell,
                                                            schema.feature_dimension));
            }
        }
        if (ok) {
            // the hash trick can collide; keep indices unique per request
            std::sort(req.features.indices.begin(), req.features.indices.end());
            req.features.indices.erase(
                std::unique(req.features.indices.begin(), req.features.indices.end()),
                req.features.indices.end());
            out.push_back(std::move(req));
            ++stats.parsed;
            ++fallback_id;
        } else {
            ++stats.malformed;
        }
    }
    if (stats.malformed * 100 > stats.lines)
        throw InputError("bid log " + path + ": " + std::to_string(stats.malformed) + " of " +
                         std::to_string(stats.lines) + " lines malformed (cap is 1%)");
    if (stats_out) *stats_out = stats;
    return out;
}

void write_bid_log(const std::string& path, const std::vector<BidRequest>& requests) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot open bid log for writing: " + path);
    for (const auto& req : requests) {
        out << req.auction_id << '\t' << (req.click_label ? *req.click_label : 0) << '\t';
        if (req.logged_market_price) out << *req.logged_market_price;
        out << '\t';
        for (std::size_t i = 0; i < req.features.indices.size(); ++i)
            out << (i ? "," : "") << req.features.indices[i];
        out << '\n';
    }
    if (!out) throw InputError("write failure on bid log: " + path);
}

void SyntheticMarketSpec::validate() const {
    if (num_requests == 0) throw ConfigError("synthetic spec: num_requests must be positive");
    if (segments.empty()) throw ConfigError("synthetic spec: no segments");
    if (b_max < 2) throw ConfigError("synthetic spec: b_max must be >= 2");
    double wsum = 0.0;
    for (const auto& seg : segments) {
        if (seg.weight < 0) throw ConfigError("synthetic spec: negative segment weight");
        wsum += seg.weight;
        double psum = 0.0;
        for (const auto& [bucket, p] : seg.price_pdf) {
            if (bucket < 1 || bucket > b_max)
                throw ConfigError("synthetic spec: price bucket out of range");
            if (p < 0) throw ConfigError("synthetic spec: negative price probability");
            psum += p;
        }
        if (std::fabs(psum - 1.0) > 1e-9)
            throw ConfigError("synthetic spec: segment price pdf does not sum to 1");
        if (seg.ctr <= 0.0 || seg.ctr >= 1.0)
            throw ConfigError("synthetic spec: segment ctr must be in (0, 1)");
    }
    if (std::fabs(wsum - 1.0) > 1e-9)
        throw ConfigError("synthetic spec: segment weights do not sum to 1");
}

std::uint32_t SyntheticMarketSpec::feature_dimension() const {
    std::uint32_t dim = static_cast<std::uint32_t>(segments.size());
    for (auto c : noise_field_cardinalities) dim += c;
    return dim;
}

double SyntheticGroundTruth::price_entropy() const {
    double h = 0.0;
    for (const auto& seg : spec.segments) {
        double seg_h = 0.0;
        for (const auto& [bucket, p] : seg.price_pdf)
            if (p > 0) seg_h -= p * std::log(p);
        h += seg.weight * seg_h;
    }
    return h;
}

std::vector<double> SyntheticGroundTruth::aggregate_pdf() const {
    std::vector<double> pdf(static_cast<std::size_t>(spec.b_max), 0.0);
    for (const auto& seg : spec.segments)
        for (const auto& [bucket, p] : seg.price_pdf)
            pdf[static_cast<std::size_t>(bucket - 1)] += seg.weight * p;
    return pdf;
}

double SyntheticGroundTruth::mean_price() const {
    double m = 0.0;
    for (const auto& seg : spec.segments)
        for (const auto& [bucket, p] : seg.price_pdf) m += seg.weight * p * bucket;
    return m;
}

void SyntheticGroundTruth::save(const std::string& file) const {
    nlohmann::json j;
    j["format"] = "synthetic-truth-1";
    j["num_requests"] = spec.num_requests;
    j["b_max"] = spec.b_max;
    j["seed"] = spec.seed;
    j["noise_field_cardinalities"] = spec.noise_field_cardinalities;
    for (const auto& seg : spec.segments) {
        nlohmann::json js;
        js["weight"] = seg.weight;
        js["ctr"] = seg.ctr;
        for (const auto& [bucket, p] : seg.price_pdf)
            js["price_pdf"][std::to_string(bucket)] = p;
        j["segments"].push_back(js);
    }
    std::ofstream out(file);
    if (!out) throw InputError("cannot open ground truth for writing: " + file);
    out << j.dump(2) << "\n";
}

SyntheticGroundTruth SyntheticGroundTruth::load(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw InputError("cannot open ground truth: " + file);
    nlohmann::json j;
    in >> j;
    if (j.value("format", "") != "synthetic-truth-1")
        throw InputError("not a synthetic ground truth file: " + file);
    SyntheticGroundTruth truth;
    truth.spec.num_requests = j["num_requests"].get<std::size_t>();
    truth.spec.b_max = j["b_max"].get<int>();
    truth.spec.seed = j["seed"].get<std::uint64_t>();
    truth.spec.noise_field_cardinalities =
        j["noise_field_cardinalities"].get<std::vector<std::uint32_t>>();
    for (const auto& js : j["segments"]) {
        SegmentSpec seg;
        seg.weight = js["weight"].get<double>();
        seg.ctr = js["ctr"].get<double>();
        for (const auto& [key, val] : js["price_pdf"].items())
            seg.price_pdf[std::stoi(key)] = val.get<double>();
        truth.spec.segments.push_back(std::move(seg));
    }
    truth.spec.validate();
    return truth;
}

std::vector<BidRequest> generate_synthetic(const SyntheticMarketSpec& spec,
                                           SyntheticGroundTruth* truth) {
    spec.validate();
    Rng rng(substream_seed(spec.seed, "synth"));
    const std::uint32_t dim = spec.feature_dimension();

    std::vector<BidRequest> out;
    out.reserve(spec.num_requests);
    for (std::size_t i = 0; i < spec.num_requests; ++i) {
        // segment draw
        double u = rng.uniform01();
        std::size_t seg_idx = 0;
        for (; seg_idx + 1 < spec.segments.size(); ++seg_idx) {
            u -= spec.segments[seg_idx].weight;
            if (u < 0) break;
        }
        const SegmentSpec& seg = spec.segments[seg_idx];

        BidRequest req;
        req.auction_id = i;
        req.features.dimension = dim;
        req.features.indices.push_back(static_cast<std::uint32_t>(seg_idx));
        std::uint32_t offset = static_cast<std::uint32_t>(spec.segments.size());
        for (auto card : spec.noise_field_cardinalities) {
            req.features.indices.push_back(offset +
                                           static_cast<std::uint32_t>(rng.uniform_int(card)));
            offset += card;
        }

        // market price draw from the segment's conditional pdf
        double pu = rng.uniform01();
        std::int64_t price = spec.segments[seg_idx].price_pdf.rbegin()->first;
        for (const auto& [bucket, p] : seg.price_pdf) {
            pu -= p;
            if (pu < 0) {
                price = bucket;
                break;
            }
        }
        req.logged_market_price = price;
        req.click_label = rng.uniform01() < seg.ctr ? 1 : 0;
        out.push_back(std::move(req));
    }
    if (truth) truth->spec = spec;
    return out;
}

double compute_cpm_train(const std::vector<BidRequest>& requests) {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& req : requests)
        if (req.logged_market_price) {
            total += static_cast<double>(*req.logged_market_price);
            ++count;
        }
    if (count == 0) throw InputError("compute_cpm_train: no priced requests");
    return 1000.0 * total / static_cast<double>(count);
}

void write_survival_dataset(const std::string& path,
                            const std::vector<om::SurvivalSample>& samples,
                            std::uint32_t dimension, int b_max) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot open survival dataset for writing: " + path);
    out << "# survival 1 dim=" << dimension << " b_max=" << b_max << "\n";
    for (const auto& s : samples) {
        out << (s.censored ? 1 : 0) << ' ' << s.observed_price << ' ';
        for (std::size_t i = 0; i < s.features.indices.size(); ++i)
            out << (i ? "," : "") << s.features.indices[i];
        if (s.features.indices.empty()) out << '-';
        out << "\n";
    }
    if (!out) throw InputError("write failure on survival dataset: " + path);
}

std::vector<om::SurvivalSample> read_survival_dataset(const std::string& path,
                                                      std::uint32_t* dimension, int* b_max_out) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open survival dataset: " + path);
    std::string header;
    std::getline(in, header);
    std::uint32_t dim = 0;
    int b_max = 0;
    if (std::sscanf(header.c_str(), "# survival 1 dim=%u b_max=%d", &dim, &b_max) != 2)
        throw InputError("not a survival v1 file: " + path);
    if (dimension) *dimension = dim;
    if (b_max_out) *b_max_out = b_max;

    std::vector<om::SurvivalSample> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        int censored = 0;
        om::SurvivalSample s;
        std::string feats;
        ls >> censored >> s.observed_price >> feats;
        if (!ls || (censored != 0 && censored != 1) || s.observed_price < 1 ||
            s.observed_price > b_max)
            throw InputError("malformed survival line: " + line);
        s.censored = censored == 1;
        s.features.dimension = dim;
        if (feats != "-")
            for (const auto& tok : split(feats, ','))
                if (!tok.empty())
                    s.features.indices.push_back(static_cast<std::uint32_t>(std::stoul(tok)));
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace rtb::io
