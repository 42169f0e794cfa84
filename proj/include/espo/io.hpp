#pragma once

#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "espo/baselines.hpp"
#include "espo/espo.hpp"
#include "espo/tabular_cmdp.hpp"

namespace espo {

/// Full-precision decimal rendering (17 significant digits round-trips any
/// double exactly). Infinities and NaN get fixed spellings.
inline std::string format_double(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

inline double parse_double(const std::string& text) {
    if (text == "inf") return std::numeric_limits<double>::infinity();
    if (text == "-inf") return -std::numeric_limits<double>::infinity();
    if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
    std::size_t pos = 0;
    const double value = std::stod(text, &pos);
    if (pos != text.size()) throw std::invalid_argument("malformed number: " + text);
    return value;
}

// ---------------------------------------------------------------------------
// Environment files
// ---------------------------------------------------------------------------

/// Writes an instance as a self-describing JSON document with all
/// probabilities at full precision. The writer is hand-rolled so the byte
/// layout is deterministic.
inline void write_cmdp(std::ostream& out, const TabularCmdp& cmdp) {
    auto row = [&](const auto& values, int n) {
        out << "[";
        for (int i = 0; i < n; ++i) out << (i ? "," : "") << format_double(values(i));
        out << "]";
    };
    out << "{\n";
    out << "  \"format\": \"espo-cmdp\",\n  \"version\": 1,\n";
    out << "  \"num_states\": " << cmdp.num_states << ",\n";
    out << "  \"num_actions\": " << cmdp.num_actions << ",\n";
    out << "  \"discount\": " << format_double(cmdp.discount) << ",\n";
    out << "  \"budget\": " << format_double(cmdp.budget) << ",\n";
    out << "  \"v_max\": " << format_double(cmdp.v_max) << ",\n";
    out << "  \"initial_dist\": ";
    row(cmdp.initial_dist, cmdp.num_states);
    out << ",\n  \"reward\": [\n";
    for (int s = 0; s < cmdp.num_states; ++s) {
        out << "    ";
        row(cmdp.reward.row(s), cmdp.num_actions);
        out << (s + 1 < cmdp.num_states ? ",\n" : "\n");
    }
    out << "  ],\n  \"cost\": [\n";
    for (int s = 0; s < cmdp.num_states; ++s) {
        out << "    ";
        row(cmdp.cost.row(s), cmdp.num_actions);
        out << (s + 1 < cmdp.num_states ? ",\n" : "\n");
    }
    out << "  ],\n  \"transitions\": [\n";
    for (int s = 0; s < cmdp.num_states; ++s) {
        out << "    [";
        for (int a = 0; a < cmdp.num_actions; ++a) {
            if (a) out << ",";
            row(cmdp.transitions[a].row(s), cmdp.num_states);
        }
        out << "]" << (s + 1 < cmdp.num_states ? ",\n" : "\n");
    }
    out << "  ]\n}\n";
}

inline void write_cmdp_file(const std::string& path, const TabularCmdp& cmdp) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    write_cmdp(out, cmdp);
}

inline TabularCmdp read_cmdp(std::istream& in) {
    nlohmann::json doc;
    in >> doc;
    if (doc.value("format", "") != "espo-cmdp")
        throw std::invalid_argument("environment file: missing or wrong \"format\" field");
    TabularCmdp cmdp;
    cmdp.num_states = doc.at("num_states").get<int>();
    cmdp.num_actions = doc.at("num_actions").get<int>();
    cmdp.discount = doc.at("discount").get<double>();
    cmdp.budget = doc.at("budget").get<double>();
    cmdp.v_max = doc.at("v_max").get<double>();
    const int S = cmdp.num_states;
    const int A = cmdp.num_actions;
    if (S <= 0 || A <= 0) throw std::invalid_argument("environment file: nonpositive sizes");

    const auto& rho = doc.at("initial_dist");
    if (static_cast<int>(rho.size()) != S)
        throw std::invalid_argument("environment file: \"initial_dist\" has wrong length");
    cmdp.initial_dist.resize(S);
    for (int s = 0; s < S; ++s) cmdp.initial_dist(s) = rho[s].get<double>();

    auto read_table = [&](const char* key, Eigen::MatrixXd& table) {
        const auto& rows = doc.at(key);
        if (static_cast<int>(rows.size()) != S)
            throw std::invalid_argument(std::string("environment file: \"") + key +
                                        "\" has wrong number of rows");
        table.resize(S, A);
        for (int s = 0; s < S; ++s) {
            if (static_cast<int>(rows[s].size()) != A)
                throw std::invalid_argument(std::string("environment file: \"") + key +
                                            "\" row has wrong length");
            for (int a = 0; a < A; ++a) table(s, a) = rows[s][a].get<double>();
        }
    };
    read_table("reward", cmdp.reward);
    read_table("cost", cmdp.cost);

    const auto& trans = doc.at("transitions");
    if (static_cast<int>(trans.size()) != S)
        throw std::invalid_argument("environment file: \"transitions\" has wrong shape");
    cmdp.transitions.assign(A, Eigen::MatrixXd::Zero(S, S));
    for (int s = 0; s < S; ++s) {
        if (static_cast<int>(trans[s].size()) != A)
            throw std::invalid_argument("environment file: \"transitions\" has wrong shape");
        for (int a = 0; a < A; ++a) {
            if (static_cast<int>(trans[s][a].size()) != S)
                throw std::invalid_argument("environment file: \"transitions\" has wrong shape");
            for (int sp = 0; sp < S; ++sp) cmdp.transitions[a](s, sp) = trans[s][a][sp].get<double>();
        }
    }
    return cmdp;
}

inline TabularCmdp read_cmdp_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open environment file: " + path);
    return read_cmdp(in);
}

// ---------------------------------------------------------------------------
// Run configuration files
// ---------------------------------------------------------------------------

/// A number that may be spelled "inf"/"-inf" in JSON (which has no literal
/// for infinities).
inline double json_number(const nlohmann::json& value, const std::string& key) {
    if (value.is_string()) return parse_double(value.get<std::string>());
    if (value.is_number()) return value.get<double>();
    throw std::invalid_argument("config field \"" + key + "\" must be a number");
}

inline EvalMode parse_eval_mode(const std::string& text) {
    if (text == "sampled") return EvalMode::Sampled;
    if (text == "exact") return EvalMode::Exact;
    throw std::invalid_argument("config field \"eval_mode\" must be \"sampled\" or \"exact\"");
}

namespace detail {

inline void check_known_keys(const nlohmann::json& doc,
                             const std::vector<std::string>& known) {
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        bool found = false;
        for (const auto& k : known) found = found || k == it.key();
        if (!found) throw std::invalid_argument("unknown config field \"" + it.key() + "\"");
    }
}

}  // namespace detail

inline EspoConfig read_espo_config(const nlohmann::json& doc) {
    detail::check_known_keys(
        doc, {"algorithm", "iterations", "learning_rate", "base_sample_size", "zeta_plus",
              "zeta_minus", "h_plus", "h_minus", "decay_h_plus", "decay_h_minus",
              "decay_zeta_plus", "decay_zeta_minus", "x_r", "budget", "seed", "eval_mode",
              "confidence_delta", "snapshot_every", "alt_soft_pairing", "store_estimates"});
    EspoConfig config;
    config.iterations = doc.at("iterations").get<int>();
    config.learning_rate = json_number(doc.at("learning_rate"), "learning_rate");
    config.base_sample_size = doc.at("base_sample_size").get<long long>();
    if (doc.contains("zeta_plus")) config.zeta_plus0 = json_number(doc["zeta_plus"], "zeta_plus");
    if (doc.contains("zeta_minus"))
        config.zeta_minus0 = json_number(doc["zeta_minus"], "zeta_minus");
    if (doc.contains("h_plus")) config.h_plus0 = json_number(doc["h_plus"], "h_plus");
    if (doc.contains("h_minus")) config.h_minus0 = json_number(doc["h_minus"], "h_minus");
    if (doc.contains("decay_h_plus")) config.decay_h_plus = doc["decay_h_plus"].get<bool>();
    if (doc.contains("decay_h_minus")) config.decay_h_minus = doc["decay_h_minus"].get<bool>();
    if (doc.contains("decay_zeta_plus"))
        config.decay_zeta_plus = doc["decay_zeta_plus"].get<bool>();
    if (doc.contains("decay_zeta_minus"))
        config.decay_zeta_minus = doc["decay_zeta_minus"].get<bool>();
    if (doc.contains("x_r")) config.x_r = json_number(doc["x_r"], "x_r");
    if (doc.contains("budget")) config.budget = json_number(doc["budget"], "budget");
    if (doc.contains("seed")) config.seed = doc["seed"].get<std::uint64_t>();
    if (doc.contains("eval_mode")) config.eval_mode = parse_eval_mode(doc["eval_mode"]);
    if (doc.contains("confidence_delta"))
        config.confidence_delta = json_number(doc["confidence_delta"], "confidence_delta");
    if (doc.contains("snapshot_every")) config.snapshot_every = doc["snapshot_every"].get<int>();
    if (doc.contains("alt_soft_pairing"))
        config.alt_soft_pairing = doc["alt_soft_pairing"].get<bool>();
    if (doc.contains("store_estimates"))
        config.store_estimates = doc["store_estimates"].get<bool>();
    return config;
}

inline BaselineConfig read_baseline_config(const nlohmann::json& doc, BaselineAlgorithm algo) {
    detail::check_known_keys(doc, {"algorithm", "iterations", "learning_rate", "sample_size",
                                   "eta_tol", "h_plus", "h_minus", "decay_h_plus",
                                   "decay_h_minus", "x_r", "budget", "seed", "eval_mode",
                                   "snapshot_every", "store_estimates"});
    BaselineConfig config;
    config.algorithm = algo;
    config.iterations = doc.at("iterations").get<int>();
    config.learning_rate = json_number(doc.at("learning_rate"), "learning_rate");
    config.sample_size = doc.at("sample_size").get<long long>();
    if (doc.contains("eta_tol")) config.eta_tol = json_number(doc["eta_tol"], "eta_tol");
    if (doc.contains("h_plus")) config.h_plus0 = json_number(doc["h_plus"], "h_plus");
    if (doc.contains("h_minus")) config.h_minus0 = json_number(doc["h_minus"], "h_minus");
    if (doc.contains("decay_h_plus")) config.decay_h_plus = doc["decay_h_plus"].get<bool>();
    if (doc.contains("decay_h_minus")) config.decay_h_minus = doc["decay_h_minus"].get<bool>();
    if (doc.contains("x_r")) config.x_r = json_number(doc["x_r"], "x_r");
    if (doc.contains("budget")) config.budget = json_number(doc["budget"], "budget");
    if (doc.contains("seed")) config.seed = doc["seed"].get<std::uint64_t>();
    if (doc.contains("eval_mode")) config.eval_mode = parse_eval_mode(doc["eval_mode"]);
    if (doc.contains("snapshot_every")) config.snapshot_every = doc["snapshot_every"].get<int>();
    if (doc.contains("store_estimates"))
        config.store_estimates = doc["store_estimates"].get<bool>();
    return config;
}

inline nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open file: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument("malformed JSON in " + path + ": " + e.what());
    }
    return doc;
}

// ---------------------------------------------------------------------------
// Trace CSV
// ---------------------------------------------------------------------------

inline constexpr const char* kTraceHeader =
    "t,mode,X_t,v_bar_r,v_bar_c,h_plus,h_minus,zeta_plus,zeta_minus,"
    "grad_dot,grad_norm_r,grad_norm_c,y_r,y_c,cum_transitions";

inline void write_trace_csv(std::ostream& out, const std::vector<IterationRecord>& trace) {
    out << kTraceHeader << "\n";
    for (const auto& rec : trace) {
        out << rec.t << ',' << to_string(rec.mode) << ',' << rec.sample_size_used << ','
            << format_double(rec.v_bar_r) << ',' << format_double(rec.v_bar_c) << ','
            << format_double(rec.h_plus) << ',' << format_double(rec.h_minus) << ','
            << format_double(rec.zeta_plus) << ',' << format_double(rec.zeta_minus) << ','
            << format_double(rec.grad_dot) << ',' << format_double(rec.grad_norm_r) << ','
            << format_double(rec.grad_norm_c) << ',' << format_double(rec.y_r) << ','
            << format_double(rec.y_c) << ',' << rec.cumulative_transitions << "\n";
    }
}

inline void write_trace_csv_file(const std::string& path,
                                 const std::vector<IterationRecord>& trace) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    write_trace_csv(out, trace);
}

inline UpdateMode parse_mode(const std::string& text) {
    if (text == "COST") return UpdateMode::Cost;
    if (text == "SOFT_CONFLICT") return UpdateMode::SoftConflict;
    if (text == "SOFT_NO_CONFLICT") return UpdateMode::SoftNoConflict;
    if (text == "REWARD") return UpdateMode::Reward;
    throw std::invalid_argument("unknown mode in trace: " + text);
}

inline std::vector<IterationRecord> read_trace_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kTraceHeader)
        throw std::invalid_argument("trace CSV: missing or unexpected header row");
    std::vector<IterationRecord> trace;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 15)
            throw std::invalid_argument("trace CSV: row with wrong column count");
        IterationRecord rec;
        rec.t = std::stoi(fields[0]);
        rec.mode = parse_mode(fields[1]);
        rec.sample_size_used = std::stoll(fields[2]);
        rec.v_bar_r = parse_double(fields[3]);
        rec.v_bar_c = parse_double(fields[4]);
        rec.h_plus = parse_double(fields[5]);
        rec.h_minus = parse_double(fields[6]);
        rec.zeta_plus = parse_double(fields[7]);
        rec.zeta_minus = parse_double(fields[8]);
        rec.grad_dot = parse_double(fields[9]);
        rec.grad_norm_r = parse_double(fields[10]);
        rec.grad_norm_c = parse_double(fields[11]);
        rec.y_r = parse_double(fields[12]);
        rec.y_c = parse_double(fields[13]);
        rec.cumulative_transitions = std::stoll(fields[14]);
        trace.push_back(rec);
    }
    return trace;
}

inline std::vector<IterationRecord> read_trace_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open trace file: " + path);
    return read_trace_csv(in);
}

// ---------------------------------------------------------------------------
// Policy snapshot sidecar (optional; lets reports re-evaluate exactly)
// ---------------------------------------------------------------------------

inline void write_policies_csv_file(const std::string& path, const RunResult& run) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "t,logits\n";
    for (std::size_t i = 0; i < run.snapshot_iterations.size(); ++i) {
        out << run.snapshot_iterations[i];
        const auto& logits = run.snapshots[i];
        for (int s = 0; s < logits.rows(); ++s)
            for (int a = 0; a < logits.cols(); ++a) out << ';' << format_double(logits(s, a));
        out << "\n";
    }
    out << "final";
    for (int s = 0; s < run.final_logits.rows(); ++s)
        for (int a = 0; a < run.final_logits.cols(); ++a)
            out << ';' << format_double(run.final_logits(s, a));
    out << "\n";
}

/// Rebuilds snapshot/final logits into `run` from a sidecar file.
inline void read_policies_csv_file(const std::string& path, int num_states, int num_actions,
                                   RunResult& run) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open policies file: " + path);
    std::string line;
    std::getline(in, line);  // header
    run.snapshot_iterations.clear();
    run.snapshots.clear();
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string label;
        std::getline(ss, label, ';');
        Eigen::MatrixXd logits(num_states, num_actions);
        std::string field;
        for (int s = 0; s < num_states; ++s)
            for (int a = 0; a < num_actions; ++a) {
                if (!std::getline(ss, field, ';'))
                    throw std::invalid_argument("policies file: truncated row");
                logits(s, a) = parse_double(field);
            }
        if (label == "final") {
            run.final_logits = logits;
        } else {
            run.snapshot_iterations.push_back(std::stoi(label));
            run.snapshots.push_back(logits);
        }
    }
}

// ---------------------------------------------------------------------------
// SVG line charts (optional report sugar)
// ---------------------------------------------------------------------------

/// Minimal polyline chart of one or more equally long series.
inline void write_svg_chart(const std::string& path, const std::vector<Eigen::VectorXd>& series,
                            const std::vector<std::string>& labels, const std::string& title) {
    static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
    const int width = 720, height = 420, margin = 50;
    double lo = 0.0, hi = 1.0;
    long n = 0;
    bool first = true;
    for (const auto& s : series) {
        if (s.size() == 0) continue;
        n = std::max<long>(n, s.size());
        const double smin = s.minCoeff(), smax = s.maxCoeff();
        lo = first ? smin : std::min(lo, smin);
        hi = first ? smax : std::max(hi, smax);
        first = false;
    }
    if (hi <= lo) hi = lo + 1.0;
    const double x_scale = (width - 2.0 * margin) / std::max<long>(n - 1, 1);
    const double y_scale = (height - 2.0 * margin) / (hi - lo);

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
        << title << "</text>\n";
    out << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - margin
        << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\""
        << height - margin << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << margin << "\" y=\"" << height - margin + 18
        << "\" font-size=\"11\">0</text>\n";
    out << "<text x=\"" << width - margin << "\" y=\"" << height - margin + 18
        << "\" text-anchor=\"end\" font-size=\"11\">" << (n - 1) << "</text>\n";
    out << "<text x=\"" << margin - 4 << "\" y=\"" << height - margin
        << "\" text-anchor=\"end\" font-size=\"11\">" << format_double(lo) << "</text>\n";
    out << "<text x=\"" << margin - 4 << "\" y=\"" << margin + 4
        << "\" text-anchor=\"end\" font-size=\"11\">" << format_double(hi) << "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        out << "<polyline fill=\"none\" stroke=\"" << kColors[k % 4] << "\" points=\"";
        for (long i = 0; i < s.size(); ++i)
            out << margin + i * x_scale << ',' << height - margin - (s(i) - lo) * y_scale << ' ';
        out << "\"/>\n";
        if (k < labels.size())
            out << "<text x=\"" << width - margin << "\" y=\"" << margin + 16 * (k + 1)
                << "\" text-anchor=\"end\" font-size=\"12\" fill=\"" << kColors[k % 4] << "\">"
                << labels[k] << "</text>\n";
    }
    out << "</svg>\n";
}

}  // namespace espo
