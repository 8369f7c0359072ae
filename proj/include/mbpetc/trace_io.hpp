#pragma once

// Trace CSV:
//   t,x1..xn,xhat1..xhatn,u1..um,V,S,transmit,reason,lambda,budget
// S is the reference decay one period earlier, S(t - h), empty for t < h.
// transmit/reason/lambda/budget are filled on sampling-instant rows only.
// Floats carry 17 significant digits so a rerun reproduces the file byte for
// byte.

#include "mbpetc/keyvalue.hpp"
#include "mbpetc/simulator.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

namespace mbpetc {

struct CsvOptions {
    // Write every `decimation`-th row; transmission rows and the last row are
    // always written.
    std::size_t decimation = 1;
};

inline std::string trace_csv_header(Eigen::Index n, Eigen::Index m) {
    std::string h = "t";
    for (Eigen::Index i = 1; i <= n; ++i) h += ",x" + std::to_string(i);
    for (Eigen::Index i = 1; i <= n; ++i) h += ",xhat" + std::to_string(i);
    for (Eigen::Index i = 1; i <= m; ++i) h += ",u" + std::to_string(i);
    return h + ",V,S,transmit,reason,lambda,budget";
}

inline void write_trace_csv(std::ostream& out, const SimTrace& tr, const ReferenceDecay& decay,
                            const CsvOptions& opts = {}) {
    if (opts.decimation == 0) throw InputError("csv decimation must be positive");
    out << trace_csv_header(tr.state_dim, tr.input_dim) << '\n';
    const std::size_t rpp = tr.rows_per_period();
    std::string line;
    for (std::size_t i = 0; i < tr.rows(); ++i) {
        const std::int64_t inst = tr.instant_of_row[i];
        const TraceInstant* ins = inst >= 0 ? &tr.instants[static_cast<std::size_t>(inst)] : nullptr;
        const bool keep = i % opts.decimation == 0 || i + 1 == tr.rows() || (ins && ins->transmit);
        if (!keep) continue;
        line = format_double(tr.t[i]);
        for (Eigen::Index j = 0; j < tr.state_dim; ++j) line += "," + format_double(tr.x[i * tr.state_dim + j]);
        for (Eigen::Index j = 0; j < tr.state_dim; ++j) line += "," + format_double(tr.xhat[i * tr.state_dim + j]);
        for (Eigen::Index j = 0; j < tr.input_dim; ++j) line += "," + format_double(tr.u[i * tr.input_dim + j]);
        line += "," + format_double(tr.v[i]) + ",";
        if (i >= rpp) line += format_double(decay.value_at(tr.t[i - rpp]));
        if (ins) {
            line += std::string(",") + (ins->transmit ? "1" : "0") + "," + to_string(ins->reason) + ",";
            if (ins->lambda) line += format_double(*ins->lambda);
            line += ",";
            if (ins->budget) line += format_double(*ins->budget);
        } else {
            line += ",0,,,";
        }
        out << line << '\n';
    }
}

inline std::string trace_csv_string(const SimTrace& tr, const ReferenceDecay& decay, const CsvOptions& opts = {}) {
    std::ostringstream ss;
    write_trace_csv(ss, tr, decay, opts);
    return ss.str();
}

/// Reads a trace CSV back. Metadata not stored in the file (model, h,
/// sub-steps) is left empty; the result supports summary() and compare().
inline SimTrace read_trace_csv(std::istream& in, const std::string& source = "<trace>") {
    std::string header;
    if (!std::getline(in, header)) throw InputError(source + ": empty trace file");
    std::vector<std::string> cols;
    {
        std::stringstream ss(header);
        std::string c;
        while (std::getline(ss, c, ',')) cols.push_back(trim(c));
    }
    Eigen::Index n = 0, m = 0;
    for (const auto& c : cols) {
        if (c.rfind("xhat", 0) == 0) continue;
        if (c.size() > 1 && c[0] == 'x') ++n;
        if (c.size() > 1 && c[0] == 'u') ++m;
    }
    if (n == 0 || cols.size() != static_cast<std::size_t>(1 + 2 * n + m + 6) ||
        header != trace_csv_header(n, m)) {
        throw InputError(source + ": unexpected trace header");
    }
    SimTrace tr;
    tr.state_dim = n;
    tr.input_dim = m;
    tr.substeps = 1;
    tr.record_stride = 1;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        while (f.size() < cols.size()) f.emplace_back();
        if (f.size() != cols.size()) throw ParseError(source, line_no, "wrong number of fields");
        auto num = [&](std::size_t idx) {
            char* end = nullptr;
            const double v = std::strtod(f[idx].c_str(), &end);
            if (f[idx].empty() || *end != '\0') throw ParseError(source, line_no, "bad number in column " + cols[idx]);
            return v;
        };
        const std::size_t row = tr.rows();
        tr.t.push_back(num(0));
        for (Eigen::Index j = 0; j < n; ++j) tr.x.push_back(num(1 + j));
        for (Eigen::Index j = 0; j < n; ++j) tr.xhat.push_back(num(1 + n + j));
        for (Eigen::Index j = 0; j < m; ++j) tr.u.push_back(num(1 + 2 * n + j));
        const std::size_t base = 1 + 2 * n + m;
        tr.v.push_back(num(base));
        tr.v_peak.push_back(tr.v.back());
        const bool transmit = f[base + 2] == "1";
        const std::string reason = f[base + 3];
        if (!reason.empty()) {
            TraceInstant ins;
            ins.t = tr.t.back();
            ins.row = row;
            ins.transmit = transmit;
            ins.reason = parse_trigger_reason(reason);
            if (!f[base + 4].empty()) ins.lambda = num(base + 4);
            if (!f[base + 5].empty()) ins.budget = num(base + 5);
            tr.instant_of_row.push_back(static_cast<std::int64_t>(tr.instants.size()));
            tr.instants.push_back(ins);
            if (transmit) tr.events.push_back(TraceEvent{0, ins.t, ins.reason, tr.v.back(), row});
        } else {
            tr.instant_of_row.push_back(-1);
        }
    }
    if (tr.rows() == 0) throw InputError(source + ": trace has no rows");
    tr.x0 = tr.x_at(0);
    tr.horizon = tr.t.back();
    return tr;
}

inline SimTrace read_trace_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "'");
    SimTrace tr = read_trace_csv(in, path);
    tr.label = path;
    return tr;
}

/// Key-value summary of a run.
inline KeyValueSection summary_section(const SimTrace& tr, const std::string& name) {
    KeyValueSection s;
    s.name = name;
    const TraceSummary sum = tr.summary();
    s.set("label", tr.label);
    s.set("model", tr.model);
    s.set("prediction", tr.prediction);
    s.set("h", tr.h);
    s.set("horizon", tr.horizon);
    s.set("substeps", std::to_string(tr.substeps));
    s.set("nu", std::to_string(tr.nu));
    s.set("sampling_instants", std::to_string(tr.instants.size()));
    s.set("transmissions", std::to_string(sum.transmissions));
    s.set("mean_gap", sum.mean_gap);
    s.set("min_gap", sum.min_gap);
    s.set("max_gap", sum.max_gap);
    s.set("v_half_life", sum.v_half_life);
    s.set("input_energy", sum.input_energy);
    s.set("final_V", sum.final_v);
    std::string fin;
    const Vector xf = tr.final_state();
    for (Eigen::Index i = 0; i < xf.size(); ++i) fin += (i ? ", " : "") + format_double(xf[i]);
    s.set("final_x", fin);
    return s;
}

}  // namespace mbpetc
