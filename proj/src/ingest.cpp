#include "slicesec/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "slicesec/csv.hpp"

namespace slicesec::ingest {

using nlohmann::json;

namespace {

double parse_number(const std::string& s) {
    // strtod accepts "Infinity"/"NaN" spellings used by flow exporters
    const char* begin = s.c_str();
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end == begin) throw Error("not a number: '" + s + "'");
    return v;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

MetricManifest MetricManifest::default_manifest() {
    // Generic slice metrics, expanded to their per-dimension columns.
    static const std::vector<std::pair<const char*, const char*>> kEntries = {
        {"cpu", "user"},
        {"cpu", "system"},
        {"cpu_limit", ""},
        {"throttled", ""},
        {"throttled_duration", ""},
        {"mem", "cache"},
        {"mem", "rss"},
        {"mem", "rss_huge"},
        {"mem", "mapped_file"},
        {"mem", "swap"},
        {"mem", "unevictable"},
        {"writeback", "dirty"},
        {"writeback", "writeback"},
        {"mem_activity", "in"},
        {"mem_activity", "out"},
        {"pgfaults", "minor"},
        {"pgfaults", "major"},
        {"mem_usage", "ram"},
        {"mem_usage", "swap"},
        {"mem_usage_limit", ""},
        {"mem_utilization", ""},
        {"mem_failcnt", ""},
        {"net_eth0", "received"},
        {"net_eth0", "sent"},
        {"net_carrier_eth0", ""},
        {"net_packets_eth0", "received"},
        {"net_packets_eth0", "sent"},
        {"net_packets_eth0", "multicast"},
        {"net_errors_eth0", "inbound"},
        {"net_errors_eth0", "outbound"},
        {"net_drops_eth0", "inbound"},
        {"net_drops_eth0", "outbound"},
        {"net_fifo_eth0", "receive"},
        {"net_fifo_eth0", "transmit"},
        {"net_events_eth0", "frames"},
        {"net_events_eth0", "collisions"},
        {"net_events_eth0", "carrier"},
        {"throttle_io", "read"},
        {"throttle_io", "write"},
        {"throttle_serviced_ops", "read"},
        {"throttle_serviced_ops", "write"},
        {"pids_current", ""},
    };
    MetricManifest m;
    for (const auto& [metric, attribute] : kEntries) m.entries.emplace_back(metric, attribute);
    return m;
}

std::string MetricManifest::column_name(const std::string& metric, const std::string& attribute) {
    return attribute.empty() ? metric : metric + "." + attribute;
}

std::optional<std::size_t> MetricManifest::index_of(const std::string& metric,
                                                    const std::string& attribute) const {
    for (std::size_t i = 0; i < entries.size(); ++i)
        if (entries[i].first == metric && entries[i].second == attribute) return i;
    return std::nullopt;
}

MetricManifest MetricManifest::from_json_file(const std::filesystem::path& path) {
    json j = json::parse(read_file(path));
    MetricManifest m;
    for (const auto& e : j.at("entries"))
        m.entries.emplace_back(e.at("metric").get<std::string>(),
                               e.value("attribute", std::string{}));
    m.label_column = j.value("label_column", std::string("label"));
    std::set<std::pair<std::string, std::string>> seen(m.entries.begin(), m.entries.end());
    if (seen.size() != m.entries.size())
        throw Error("metric manifest: duplicate (metric, attribute) pair");
    return m;
}

std::string MetricManifest::to_json_string() const {
    json j;
    j["label_column"] = label_column;
    j["entries"] = json::array();
    for (const auto& [metric, attribute] : entries) {
        json e;
        e["metric"] = metric;
        if (!attribute.empty()) e["attribute"] = attribute;
        j["entries"].push_back(e);
    }
    return j.dump(2) + "\n";
}

FlowSchema FlowSchema::from_json_file(const std::filesystem::path& path) {
    json j = json::parse(read_file(path));
    FlowSchema s;
    for (const auto& f : j.at("features")) s.features.push_back(f.get<std::string>());
    s.label = j.at("label").get<std::string>();
    if (s.features.size() != kFlowFeatureCount)
        throw Error("flow schema: expected " + std::to_string(kFlowFeatureCount) +
                    " features, got " + std::to_string(s.features.size()));
    return s;
}

std::string FlowSchema::to_json_string() const {
    json j;
    j["features"] = features;
    j["label"] = label;
    return j.dump(2) + "\n";
}

ParsedFlows parse_flow_csv(const std::filesystem::path& path, const FlowSchema& schema) {
    csv::Table t = csv::read_table(path);
    std::unordered_map<std::string, std::size_t> col_index;
    for (std::size_t i = 0; i < t.header.size(); ++i) col_index[trim(t.header[i])] = i;

    std::vector<std::size_t> feature_cols;
    feature_cols.reserve(schema.features.size());
    for (const auto& name : schema.features) {
        auto it = col_index.find(name);
        if (it == col_index.end()) throw MissingColumn("flow csv: missing column '" + name + "'");
        feature_cols.push_back(it->second);
    }
    auto lit = col_index.find(schema.label);
    if (lit == col_index.end())
        throw MissingColumn("flow csv: missing label column '" + schema.label + "'");
    std::size_t label_col = lit->second;

    ParsedFlows out;
    for (std::size_t ri = 0; ri < t.rows.size(); ++ri) {
        const auto& row = t.rows[ri];
        if (row.size() != t.header.size())
            throw Error("flow csv: row " + std::to_string(ri + 2) + " has " +
                        std::to_string(row.size()) + " fields, header has " +
                        std::to_string(t.header.size()));
        FlowRecord rec;
        rec.features.resize(schema.features.size());
        bool finite = true;
        for (std::size_t i = 0; i < feature_cols.size(); ++i) {
            double v;
            try {
                v = parse_number(row[feature_cols[i]]);
            } catch (const Error&) {
                throw Error("flow csv: row " + std::to_string(ri + 2) +
                            ": bad numeric value '" + row[feature_cols[i]] + "'");
            }
            if (!std::isfinite(v)) {
                finite = false;
                break;
            }
            rec.features[i] = v;
        }
        if (!finite) {
            ++out.skipped;
            continue;
        }
        std::string label = trim(row[label_col]);
        if (label.empty()) throw BadLabel("flow csv: row " + std::to_string(ri + 2) + ": empty label");
        if (lower(label) == "benign") {
            rec.label = 0;
        } else {
            rec.label = 1;
            rec.attack_tag = label;
        }
        out.records.push_back(std::move(rec));
    }
    return out;
}

std::vector<TelemetrySample> parse_telemetry_csv(const std::filesystem::path& path) {
    csv::Table t = csv::read_table(path);
    if (t.header.empty() || (t.header.size() == 1 && t.header.front().empty())) return {};
    const std::vector<std::string> expect = {"entity_id", "timestamp", "metric", "attribute", "value"};
    std::vector<std::size_t> idx(expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) {
        auto it = std::find(t.header.begin(), t.header.end(), expect[i]);
        if (it == t.header.end())
            throw MissingColumn("telemetry csv: missing column '" + expect[i] + "'");
        idx[i] = static_cast<std::size_t>(it - t.header.begin());
    }
    std::vector<TelemetrySample> out;
    out.reserve(t.rows.size());
    for (std::size_t ri = 0; ri < t.rows.size(); ++ri) {
        const auto& row = t.rows[ri];
        if (row.size() != t.header.size())
            throw Error("telemetry csv: malformed row " + std::to_string(ri + 2));
        TelemetrySample s;
        s.entity_id = trim(row[idx[0]]);
        // sub-second inputs truncate to whole seconds
        s.timestamp = static_cast<std::int64_t>(parse_number(row[idx[1]]));
        s.metric = trim(row[idx[2]]);
        s.attribute = trim(row[idx[3]]);
        s.value = parse_number(row[idx[4]]);
        out.push_back(std::move(s));
    }
    return out;
}

BehavioralDataset expand_telemetry(const std::vector<TelemetrySample>& samples,
                                   const MetricManifest& manifest) {
    BehavioralDataset ds;
    if (!samples.empty()) ds.entity_id = samples.front().entity_id;
    for (const auto& s : samples)
        if (s.entity_id != ds.entity_id)
            throw Error("expand_telemetry: mixed entity ids ('" + ds.entity_id + "' vs '" +
                        s.entity_id + "')");

    // last value wins per (timestamp, column)
    std::map<std::int64_t, std::vector<std::pair<std::size_t, double>>> by_time;
    for (const auto& s : samples) {
        auto col = manifest.index_of(s.metric, s.attribute);
        if (!col)
            throw UnknownMetric("expand_telemetry: metric '" +
                                MetricManifest::column_name(s.metric, s.attribute) +
                                "' not in manifest");
        by_time[s.timestamp].emplace_back(*col, s.value);
    }

    ds.columns.reserve(manifest.entries.size());
    for (const auto& [metric, attribute] : manifest.entries)
        ds.columns.push_back(MetricManifest::column_name(metric, attribute));

    ds.matrix = Matrix(by_time.size(), ds.columns.size());
    ds.timestamps.reserve(by_time.size());
    std::vector<double> carry(ds.columns.size(), 0.0);  // forward-fill state
    std::size_t r = 0;
    for (const auto& [ts, cells] : by_time) {
        ds.timestamps.push_back(ts);
        for (const auto& [col, value] : cells) carry[col] = value;
        std::copy(carry.begin(), carry.end(), ds.matrix.data.begin() + static_cast<long>(r * ds.columns.size()));
        ++r;
    }
    return ds;
}

BehavioralDataset timestamp_join(const std::vector<BehavioralDataset>& tables) {
    if (tables.empty()) throw EmptyInput("timestamp_join: no tables");
    std::set<std::string> all_columns;
    std::set<std::int64_t> all_ts;
    std::size_t total_cols = 0;
    for (const auto& t : tables) {
        if (t.labeled) throw Error("timestamp_join: inputs must be unlabeled");
        for (const auto& c : t.columns)
            if (!all_columns.insert(c).second)
                throw Error("timestamp_join: duplicate column '" + c + "'");
        all_ts.insert(t.timestamps.begin(), t.timestamps.end());
        total_cols += t.columns.size();
    }

    BehavioralDataset out;
    out.entity_id = tables.size() == 1 ? tables.front().entity_id : "";
    out.timestamps.assign(all_ts.begin(), all_ts.end());
    out.columns.reserve(total_cols);
    for (const auto& t : tables) out.columns.insert(out.columns.end(), t.columns.begin(), t.columns.end());
    out.matrix = Matrix(out.timestamps.size(), total_cols);

    std::size_t col_offset = 0;
    for (const auto& t : tables) {
        // walk the union, forward-filling this table's most recent row
        std::size_t src = 0;
        bool seen = false;
        for (std::size_t r = 0; r < out.timestamps.size(); ++r) {
            while (src < t.timestamps.size() && t.timestamps[src] <= out.timestamps[r]) {
                seen = true;
                ++src;
            }
            if (seen) {
                std::size_t use = src - 1;
                for (std::size_t c = 0; c < t.columns.size(); ++c)
                    out.matrix(r, col_offset + c) = t.matrix(use, c);
            }
            // rows before this table's first sample stay 0.0
        }
        col_offset += t.columns.size();
    }
    return out;
}

BehavioralDataset with_entity_prefix(BehavioralDataset ds) {
    for (auto& c : ds.columns) c = ds.entity_id + "." + c;
    return ds;
}

std::vector<AttackWindow> read_windows_json(const std::filesystem::path& path) {
    json j = json::parse(read_file(path));
    std::vector<AttackWindow> out;
    for (const auto& w : j)
        out.push_back({w.at("start").get<std::int64_t>(), w.at("end").get<std::int64_t>()});
    return out;
}

BehavioralDataset label_windows(BehavioralDataset ds, std::vector<AttackWindow> windows) {
    for (const auto& w : windows)
        if (w.start > w.end)
            throw Error("label_windows: window start " + std::to_string(w.start) +
                        " exceeds end " + std::to_string(w.end));
    // normalize: sort and merge overlaps
    std::sort(windows.begin(), windows.end(),
              [](const AttackWindow& a, const AttackWindow& b) { return a.start < b.start; });
    std::vector<AttackWindow> merged;
    for (const auto& w : windows) {
        if (!merged.empty() && w.start <= merged.back().end) {
            merged.back().end = std::max(merged.back().end, w.end);
        } else {
            merged.push_back(w);
        }
    }

    ds.labels.assign(ds.timestamps.size(), 0);
    std::size_t wi = 0;
    for (std::size_t r = 0; r < ds.timestamps.size(); ++r) {
        std::int64_t ts = ds.timestamps[r];
        while (wi < merged.size() && merged[wi].end < ts) ++wi;
        if (wi < merged.size() && merged[wi].start <= ts) ds.labels[r] = 1;
    }
    ds.labeled = true;
    return ds;
}

BehavioralDataset rebalance(const BehavioralDataset& ds, double benign_ratio, std::uint64_t seed) {
    if (!(benign_ratio > 0.0 && benign_ratio < 1.0))
        throw Error("rebalance: benign_ratio must be in (0,1)");
    if (!ds.labeled) throw Error("rebalance: dataset is unlabeled");

    std::vector<std::size_t> benign, malignant;
    for (std::size_t r = 0; r < ds.labels.size(); ++r)
        (ds.labels[r] == 0 ? benign : malignant).push_back(r);
    if (benign.empty() || malignant.empty())
        throw Unachievable("rebalance: both classes required");

    double current = static_cast<double>(benign.size()) / static_cast<double>(ds.labels.size());
    Rng rng(seed);
    std::vector<std::size_t> keep_benign = benign, keep_malignant = malignant;
    if (current > benign_ratio) {
        // too many benign rows: keep all malignant, sample benign down
        auto target = static_cast<std::uint64_t>(std::llround(
            static_cast<double>(malignant.size()) * benign_ratio / (1.0 - benign_ratio)));
        if (target == 0) throw Unachievable("rebalance: ratio would eliminate the benign class");
        target = std::min<std::uint64_t>(target, benign.size());
        rng.shuffle(keep_benign);
        keep_benign.resize(target);
    } else if (current < benign_ratio) {
        auto target = static_cast<std::uint64_t>(std::llround(
            static_cast<double>(benign.size()) * (1.0 - benign_ratio) / benign_ratio));
        if (target == 0) throw Unachievable("rebalance: ratio would eliminate the malignant class");
        target = std::min<std::uint64_t>(target, malignant.size());
        rng.shuffle(keep_malignant);
        keep_malignant.resize(target);
    }

    std::vector<std::size_t> kept;
    kept.reserve(keep_benign.size() + keep_malignant.size());
    kept.insert(kept.end(), keep_benign.begin(), keep_benign.end());
    kept.insert(kept.end(), keep_malignant.begin(), keep_malignant.end());
    std::sort(kept.begin(), kept.end());
    rng.shuffle(kept);

    BehavioralDataset out;
    out.entity_id = ds.entity_id;
    out.columns = ds.columns;
    out.labeled = true;
    out.matrix = Matrix(kept.size(), ds.columns.size());
    out.timestamps.reserve(kept.size());
    out.labels.reserve(kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i) {
        std::size_t src = kept[i];
        out.timestamps.push_back(ds.timestamps[src]);
        out.labels.push_back(ds.labels[src]);
        for (std::size_t c = 0; c < ds.columns.size(); ++c) out.matrix(i, c) = ds.matrix(src, c);
    }
    return out;
}

ShardSpec ShardSpec::from_json_file(const std::filesystem::path& path) {
    json j = json::parse(read_file(path));
    ShardSpec spec;
    for (const auto& s : j.at("shards")) {
        ShardAssignment a;
        a.id = s.at("id").get<int>();
        a.file = s.at("file").get<std::string>();
        if (s.contains("expected_rows")) a.expected_rows = s.at("expected_rows").get<std::uint64_t>();
        if (s.contains("expected_malignant_pct"))
            a.expected_malignant_pct = s.at("expected_malignant_pct").get<double>();
        spec.assignments.push_back(std::move(a));
    }
    return spec;
}

std::string ShardSpec::to_json_string() const {
    json j;
    j["shards"] = json::array();
    for (const auto& a : assignments) {
        json s;
        s["id"] = a.id;
        s["file"] = a.file;
        if (a.expected_rows) s["expected_rows"] = *a.expected_rows;
        if (a.expected_malignant_pct) s["expected_malignant_pct"] = *a.expected_malignant_pct;
        j["shards"].push_back(std::move(s));
    }
    return j.dump(2) + "\n";
}

PartitionResult partition_non_iid(const ShardSpec& spec, const FlowSchema& schema,
                                  const std::filesystem::path& base_dir) {
    if (spec.assignments.empty()) throw EmptyInput("partition_non_iid: empty shard spec");
    std::set<int> ids;
    for (const auto& a : spec.assignments) ids.insert(a.id);
    for (int expect = 1; auto id : ids) {
        if (id != expect++)
            throw Error("partition_non_iid: shard ids must be contiguous from 1");
    }

    PartitionResult result;
    for (const auto& a : spec.assignments) {
        std::filesystem::path p = a.file;
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        ParsedFlows parsed = parse_flow_csv(p, schema);
        if (parsed.records.empty())
            throw ShardEmpty("partition_non_iid: shard " + std::to_string(a.id) + " file '" +
                             a.file + "' has no valid rows");

        std::size_t rows = parsed.records.size();
        std::size_t malignant = 0;
        for (const auto& r : parsed.records) malignant += static_cast<std::size_t>(r.label);
        double pct = 100.0 * static_cast<double>(malignant) / static_cast<double>(rows);
        if (a.expected_rows && *a.expected_rows != rows) {
            result.warnings.push_back("shard " + std::to_string(a.id) + ": expected " +
                                      std::to_string(*a.expected_rows) + " rows, parsed " +
                                      std::to_string(rows));
        }
        if (a.expected_malignant_pct && std::fabs(*a.expected_malignant_pct - pct) > 0.1) {
            result.warnings.push_back("shard " + std::to_string(a.id) +
                                      ": expected malignant pct " +
                                      format_double(*a.expected_malignant_pct) + ", parsed " +
                                      format_double(pct));
        }

        auto& dst = result.shards[a.id];
        dst.insert(dst.end(), std::make_move_iterator(parsed.records.begin()),
                   std::make_move_iterator(parsed.records.end()));
        result.skipped[a.id] += parsed.skipped;
    }
    return result;
}

void write_behavioral_csv(const BehavioralDataset& ds, const std::filesystem::path& path) {
    std::ostringstream out;
    out << "timestamp";
    for (const auto& c : ds.columns) out << ',' << c;
    if (ds.labeled) out << ",label";
    out << '\n';
    for (std::size_t r = 0; r < ds.timestamps.size(); ++r) {
        out << ds.timestamps[r];
        for (std::size_t c = 0; c < ds.columns.size(); ++c)
            out << ',' << format_double(ds.matrix(r, c));
        if (ds.labeled) out << ',' << ds.labels[r];
        out << '\n';
    }
    write_file_atomic(path, out.str());
}

BehavioralDataset read_behavioral_csv(const std::filesystem::path& path,
                                      const std::string& label_column) {
    csv::Table t = csv::read_table(path);
    if (t.header.empty() || t.header.front() != "timestamp")
        throw Error("behavioral csv: first column must be 'timestamp'");
    BehavioralDataset ds;
    std::size_t ncols = t.header.size() - 1;
    bool labeled = ncols > 0 && t.header.back() == label_column;
    if (labeled) --ncols;
    ds.labeled = labeled;
    ds.columns.assign(t.header.begin() + 1, t.header.begin() + 1 + static_cast<long>(ncols));
    ds.matrix = Matrix(t.rows.size(), ncols);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        if (row.size() != t.header.size())
            throw Error("behavioral csv: malformed row " + std::to_string(r + 2));
        ds.timestamps.push_back(static_cast<std::int64_t>(parse_number(row[0])));
        for (std::size_t c = 0; c < ncols; ++c) ds.matrix(r, c) = parse_number(row[c + 1]);
        if (labeled) ds.labels.push_back(parse_number(row.back()) != 0.0 ? 1 : 0);
    }
    return ds;
}

}  // namespace slicesec::ingest
