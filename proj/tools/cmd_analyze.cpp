#include <charconv>
#include <iostream>
#include <map>
#include <sstream>

#include "cli_util.hpp"
#include "slicesec/analytics.hpp"
#include "slicesec/csv.hpp"
#include "slicesec/neuralnet.hpp"
#include "slicesec/svg.hpp"

namespace slicesec::cli {

using nlohmann::json;

namespace {

double parse_cell(const std::string& cell, std::size_t row_number) {
    const char* begin = cell.c_str();
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end == begin)
        throw FormatError("row " + std::to_string(row_number) + ": not a number: '" + cell + "'");
    return v;
}

csv::Table read_csv_checked(const std::string& path) {
    if (!std::filesystem::exists(path)) throw DataError("no such file: " + path);
    try {
        return csv::read_table(path);
    } catch (const Error& e) {
        throw FormatError(path + ": " + e.what());
    }
}

std::size_t column_index(const csv::Table& t, const std::string& name, const std::string& path) {
    for (std::size_t i = 0; i < t.header.size(); ++i)
        if (t.header[i] == name) return i;
    throw FormatError(path + ": missing column '" + name + "'");
}

int analyze_roc(const AnalyzeArgs& args, RunManifest& manifest) {
    auto t = read_csv_checked(args.data_path);
    auto score_col = column_index(t, "score", args.data_path);
    auto label_col = column_index(t, "label", args.data_path);
    std::vector<double> scores;
    std::vector<int> labels;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (t.rows[r].size() != t.header.size())
            throw FormatError("row " + std::to_string(r + 2) + ": wrong field count");
        scores.push_back(parse_cell(t.rows[r][score_col], r + 2));
        labels.push_back(parse_cell(t.rows[r][label_col], r + 2) != 0.0 ? 1 : 0);
    }
    if (scores.empty()) throw DataError(args.data_path + ": no rows");

    analytics::RocCurve curve;
    try {
        curve = analytics::roc_auc(scores, labels);
    } catch (const analytics::SingleClass& e) {
        throw DataError(e.what());
    }

    std::filesystem::path out(args.out_dir);
    std::filesystem::create_directories(out);
    std::ostringstream csv_out;
    csv_out << "fpr,tpr\n";
    svg::Series series{"roc", {}};
    for (const auto& [fpr, tpr] : curve.points) {
        csv_out << format_double(fpr) << ',' << format_double(tpr) << '\n';
        series.points.emplace_back(fpr, tpr);
    }
    write_file_atomic(out / "roc.csv", csv_out.str());
    svg::write_line_chart(out / "roc.svg", "ROC", "false positive rate", "true positive rate",
                          {series});
    json report;
    report["auc"] = curve.auc;
    report["points"] = curve.points.size();
    write_file_atomic(out / "roc.json", report.dump(2) + "\n");
    for (const char* f : {"roc.csv", "roc.svg", "roc.json"}) manifest.add_output(out / f);
    std::cout << "auc " << curve.auc << "\n";
    return kExitOk;
}

int analyze_pca(const AnalyzeArgs& args, RunManifest& manifest) {
    ingest::BehavioralDataset ds;
    try {
        ds = ingest::read_behavioral_csv(args.data_path);
    } catch (const Error& e) {
        throw FormatError(args.data_path + ": " + e.what());
    }
    if (ds.matrix.rows == 0) throw DataError(args.data_path + ": no rows");

    analytics::Pca2Projection projection;
    try {
        projection = analytics::pca2(ds.matrix);
    } catch (const analytics::DegenerateData& e) {
        throw DataError(e.what());
    }

    std::filesystem::path out(args.out_dir);
    std::filesystem::create_directories(out);
    std::ostringstream csv_out;
    csv_out << "pc1,pc2" << (ds.labeled ? ",label" : "") << "\n";
    svg::Series benign{"benign", {}}, malignant{"malignant", {}};
    for (std::size_t r = 0; r < projection.projected.rows; ++r) {
        csv_out << format_double(projection.projected(r, 0)) << ','
                << format_double(projection.projected(r, 1));
        if (ds.labeled) {
            csv_out << ',' << ds.labels[r];
            (ds.labels[r] != 0 ? malignant : benign)
                .points.emplace_back(projection.projected(r, 0), projection.projected(r, 1));
        } else {
            benign.points.emplace_back(projection.projected(r, 0), projection.projected(r, 1));
        }
        csv_out << '\n';
    }
    write_file_atomic(out / "pca_projection.csv", csv_out.str());
    std::vector<svg::Series> series = ds.labeled ? std::vector<svg::Series>{benign, malignant}
                                                 : std::vector<svg::Series>{benign};
    svg::write_scatter_chart(out / "pca.svg", "PCA projection", "pc1", "pc2", series);
    json report;
    report["explained_variance"] = {projection.explained_variance[0],
                                    projection.explained_variance[1]};
    write_file_atomic(out / "pca.json", report.dump(2) + "\n");
    for (const char* f : {"pca_projection.csv", "pca.svg", "pca.json"}) manifest.add_output(out / f);
    std::cout << "explained variance " << projection.explained_variance[0] << ", "
              << projection.explained_variance[1] << "\n";
    return kExitOk;
}

int analyze_divergence(const AnalyzeArgs& args, RunManifest& manifest) {
    auto load = [](const std::string& path) {
        if (!std::filesystem::exists(path)) throw DataError("no such file: " + path);
        std::string bytes = read_file(path);
        try {
            return nn::flat_from_bytes(std::vector<std::uint8_t>(bytes.begin(), bytes.end()));
        } catch (const Error& e) {
            throw FormatError(path + ": " + e.what());
        }
    };
    auto a = load(args.data_path);
    auto b = load(args.second_path);
    manifest.add_input(args.second_path);
    double d;
    try {
        d = analytics::cosine_divergence(a.values, b.values);
    } catch (const analytics::ZeroVector& e) {
        throw DataError(e.what());
    } catch (const analytics::LengthMismatch& e) {
        throw DataError(e.what());
    }
    if (!args.out_dir.empty()) {
        std::filesystem::path out(args.out_dir);
        std::filesystem::create_directories(out);
        json report;
        report["cosine_divergence"] = d;
        write_file_atomic(out / "divergence.json", report.dump(2) + "\n");
        manifest.add_output(out / "divergence.json");
    }
    std::cout << "cosine divergence " << format_double(d) << "\n";
    return kExitOk;
}

int analyze_anova(const AnalyzeArgs& args, RunManifest& manifest) {
    auto t = read_csv_checked(args.data_path);
    auto group_col = column_index(t, "group", args.data_path);
    auto value_col = column_index(t, "value", args.data_path);
    std::map<std::string, std::vector<double>> by_group;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (t.rows[r].size() != t.header.size())
            throw FormatError("row " + std::to_string(r + 2) + ": wrong field count");
        by_group[t.rows[r][group_col]].push_back(parse_cell(t.rows[r][value_col], r + 2));
    }
    if (by_group.size() < 2) throw DataError(args.data_path + ": need at least two groups");
    std::vector<std::vector<double>> groups;
    for (auto& [name, values] : by_group) groups.push_back(std::move(values));

    analytics::AnovaResult r;
    try {
        r = analytics::anova_oneway(groups);
    } catch (const Error& e) {
        throw DataError(e.what());
    }

    // the full analysis-of-variance table
    std::ostringstream table;
    table << "source,df,sum_sq,mean_sq,f_value,p_value\n";
    table << "model," << r.df_model << ',' << format_double(r.ss_model) << ','
          << format_double(r.ms_model) << ',' << (r.f_defined ? format_double(r.f_value) : "undefined")
          << ',' << (r.f_defined ? format_double(r.p_value) : "undefined") << '\n';
    table << "error," << r.df_error << ',' << format_double(r.ss_error) << ','
          << format_double(r.ms_error) << ",,\n";
    table << "total," << r.df_total << ',' << format_double(r.ss_total) << ",,,\n";
    std::cout << table.str();
    std::cout << "r_square " << format_double(r.r_square) << "\n";

    if (!args.out_dir.empty()) {
        std::filesystem::path out(args.out_dir);
        std::filesystem::create_directories(out);
        write_file_atomic(out / "anova.csv", table.str());
        json report;
        report["df_model"] = r.df_model;
        report["df_error"] = r.df_error;
        report["df_total"] = r.df_total;
        report["ss_model"] = r.ss_model;
        report["ss_error"] = r.ss_error;
        report["ss_total"] = r.ss_total;
        report["ms_model"] = r.ms_model;
        report["ms_error"] = r.ms_error;
        report["f_defined"] = r.f_defined;
        if (r.f_defined) {
            report["f_value"] = r.f_value;
            report["p_value"] = r.p_value;
        }
        report["r_square"] = r.r_square;
        write_file_atomic(out / "anova.json", report.dump(2) + "\n");
        manifest.add_output(out / "anova.csv");
        manifest.add_output(out / "anova.json");
    }
    return kExitOk;
}

int analyze_describe(const AnalyzeArgs& args, RunManifest& manifest) {
    auto t = read_csv_checked(args.data_path);
    auto value_col = column_index(t, "value", args.data_path);
    std::vector<double> values;
    for (std::size_t r = 0; r < t.rows.size(); ++r)
        values.push_back(parse_cell(t.rows[r][value_col], r + 2));
    if (values.empty()) throw DataError(args.data_path + ": no rows");

    auto d = analytics::describe(values);
    json report;
    report["n"] = d.n;
    report["mean"] = d.mean;
    report["stddev"] = d.stddev;
    report["stddev_defined"] = d.stddev_defined;
    report["se_mean"] = d.se_mean;
    report["min"] = d.min;
    report["q1"] = d.q1;
    report["median"] = d.median;
    report["q3"] = d.q3;
    report["max"] = d.max;
    std::cout << "n " << d.n << " mean " << format_double(d.mean) << " stddev "
              << format_double(d.stddev) << " se_mean " << format_double(d.se_mean) << " min "
              << format_double(d.min) << " q1 " << format_double(d.q1) << " median "
              << format_double(d.median) << " q3 " << format_double(d.q3) << " max "
              << format_double(d.max) << "\n";
    if (!args.out_dir.empty()) {
        std::filesystem::path out(args.out_dir);
        std::filesystem::create_directories(out);
        write_file_atomic(out / "describe.json", report.dump(2) + "\n");
        manifest.add_output(out / "describe.json");
    }
    return kExitOk;
}

}  // namespace

int cmd_analyze(const AnalyzeArgs& args) {
    RunManifest manifest = begin_manifest("analyze " + args.mode, args.data_path, 0);
    if (std::filesystem::exists(args.data_path)) manifest.add_input(args.data_path);

    int rc;
    if (args.mode == "roc")
        rc = analyze_roc(args, manifest);
    else if (args.mode == "pca")
        rc = analyze_pca(args, manifest);
    else if (args.mode == "divergence")
        rc = analyze_divergence(args, manifest);
    else if (args.mode == "anova")
        rc = analyze_anova(args, manifest);
    else if (args.mode == "describe")
        rc = analyze_describe(args, manifest);
    else
        throw Error("unknown analyze mode '" + args.mode + "'");

    if (!args.out_dir.empty()) manifest.write(args.out_dir);
    return rc;
}

}  // namespace slicesec::cli
