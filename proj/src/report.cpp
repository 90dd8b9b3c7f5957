#include "t2s/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "t2s/errors.hpp"

namespace t2s {

namespace {

std::string g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
}

std::string g6(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
}

double parse_num(const std::string& field, const std::string& v) {
    try {
        std::size_t used = 0;
        const double out = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw LoadError(field + ": malformed number '" + v + "'");
    }
}

std::int64_t parse_int(const std::string& field, const std::string& v) {
    try {
        std::size_t used = 0;
        const std::int64_t out = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw LoadError(field + ": malformed integer '" + v + "'");
    }
}

std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

std::string quote_csv(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

// Consumes the manifest comment and the header row; returns remaining lines.
std::vector<std::string> open_table(const std::string& text, std::uint64_t expected_manifest,
                                    const std::string& want_header, const std::string& what) {
    std::stringstream ss(text);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(ss, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    if (lines.empty() || lines[0].rfind("# manifest=", 0) != 0) {
        throw LoadError(what + ": missing manifest reference line");
    }
    const std::string got = lines[0].substr(std::string("# manifest=").size());
    if (got != hex16(expected_manifest)) {
        throw LoadError(what + ": manifest mismatch (table has " + got + ", directory manifest is " +
                        hex16(expected_manifest) + ")");
    }
    std::size_t i = 1;
    while (i < lines.size() && !lines[i].empty() && lines[i][0] == '#') ++i;
    if (i >= lines.size() || lines[i] != want_header) {
        throw LoadError(what + ": header row mismatch (expected '" + want_header + "')");
    }
    return std::vector<std::string>(lines.begin() + static_cast<std::ptrdiff_t>(i) + 1, lines.end());
}

constexpr const char* kPalette[10] = {"#4063d8", "#d85040", "#38a14d", "#c78a1f", "#7d4bc2",
                                      "#1f9e9e", "#c2489a", "#6b7280", "#8a6642", "#2e6f3e"};

std::string svg_open(int w, int h, std::uint64_t manifest) {
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) +
                    "\" height=\"" + std::to_string(h) + "\" viewBox=\"0 0 " + std::to_string(w) +
                    " " + std::to_string(h) + "\">\n";
    s += "<!-- manifest=" + hex16(manifest) + " -->\n";
    s += "<rect width=\"" + std::to_string(w) + "\" height=\"" + std::to_string(h) +
         "\" fill=\"white\"/>\n";
    return s;
}

std::string svg_text(double x, double y, const std::string& text, int size = 12,
                     const std::string& anchor = "start") {
    return "<text x=\"" + g6(x) + "\" y=\"" + g6(y) + "\" font-family=\"monospace\" font-size=\"" +
           std::to_string(size) + "\" text-anchor=\"" + anchor + "\">" + text + "</text>\n";
}

std::string svg_line(double x1, double y1, double x2, double y2, const std::string& stroke,
                     const std::string& extra = "") {
    return "<line x1=\"" + g6(x1) + "\" y1=\"" + g6(y1) + "\" x2=\"" + g6(x2) + "\" y2=\"" +
           g6(y2) + "\" stroke=\"" + stroke + "\" " + extra + "/>\n";
}

}  // namespace

std::string hex16(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("short write to " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string render_success_matrix_csv(const SuccessMatrix& m, std::uint64_t manifest) {
    std::string out = "# manifest=" + hex16(manifest) + "\n";
    out += "after_task,on_task,success\n";
    for (int i = 0; i < m.size(); ++i) {
        for (int q = 0; q <= i; ++q) {
            out += std::to_string(i) + "," + std::to_string(q) + "," + g(m.at(i, q)) + "\n";
        }
    }
    return out;
}

SuccessMatrix parse_success_matrix_csv(const std::string& text, std::uint64_t expected_manifest) {
    const std::vector<std::string> rows =
        open_table(text, expected_manifest, "after_task,on_task,success", "success matrix table");
    int M = 0;
    std::vector<std::array<std::int64_t, 2>> coords;
    std::vector<double> vals;
    for (const std::string& line : rows) {
        if (line.empty()) continue;
        const std::vector<std::string> f = split_csv_row(line);
        if (f.size() != 3) throw LoadError("success matrix table: row with wrong column count");
        const std::int64_t i = parse_int("after_task", f[0]);
        const std::int64_t q = parse_int("on_task", f[1]);
        coords.push_back({i, q});
        vals.push_back(parse_num("success", f[2]));
        M = std::max(M, static_cast<int>(i) + 1);
    }
    if (M == 0) throw LoadError("success matrix table: no data rows");
    SuccessMatrix m(M);
    for (std::size_t k = 0; k < coords.size(); ++k) {
        m.set(static_cast<int>(coords[k][0]), static_cast<int>(coords[k][1]), vals[k]);
    }
    return m;
}

std::string render_metrics_csv(const LifelongResult& res, NbtConvention convention,
                               std::uint64_t manifest) {
    std::string out = "# manifest=" + hex16(manifest) + "\n";
    out += std::string("# ") + nbt_convention_label(convention) + "\n";
    out += "metric,task,value\n";
    out += "fwt,," + g(res.fwt) + "\n";
    if (res.nbt_defined) out += "nbt,," + g(res.nbt) + "\n";
    out += "auc,," + g(res.auc) + "\n";
    for (std::size_t i = 0; i < res.nbt_m.size(); ++i) {
        out += "nbt_m," + std::to_string(i) + "," + g(res.nbt_m[i]) + "\n";
    }
    for (std::size_t i = 0; i < res.auc_m.size(); ++i) {
        out += "auc_m," + std::to_string(i) + "," + g(res.auc_m[i]) + "\n";
    }
    for (const TaskReport& r : res.reports) {
        out += "fwt_one_epoch," + std::to_string(r.position) + "," + g(r.fwt_one_epoch) + "\n";
    }
    return out;
}

std::string render_ledger_csv(const std::vector<TaskReport>& reports, std::uint64_t manifest) {
    std::string out = "# manifest=" + hex16(manifest) + "\n";
    out +=
        "position,task_id,instruction,selected_rows,shared_rows,trainable_rows,used_rows_after,"
        "fwt_one_epoch,first_loss,final_loss\n";
    for (const TaskReport& r : reports) {
        out += std::to_string(r.position) + "," + std::to_string(r.task_id) + "," +
               quote_csv(r.instruction) + "," + std::to_string(r.selected_rows) + "," +
               std::to_string(r.shared_rows) + "," + std::to_string(r.trainable_rows) + "," +
               std::to_string(r.used_rows_after) + "," + g(r.fwt_one_epoch) + "," +
               g(r.first_loss) + "," + g(r.final_loss) + "\n";
    }
    return out;
}

std::vector<TaskReport> parse_ledger_csv(const std::string& text, std::uint64_t expected_manifest) {
    const std::vector<std::string> rows = open_table(
        text, expected_manifest,
        "position,task_id,instruction,selected_rows,shared_rows,trainable_rows,used_rows_after,"
        "fwt_one_epoch,first_loss,final_loss",
        "token ledger table");
    std::vector<TaskReport> out;
    for (const std::string& line : rows) {
        if (line.empty()) continue;
        const std::vector<std::string> f = split_csv_row(line);
        if (f.size() != 10) throw LoadError("token ledger table: row with wrong column count");
        TaskReport r;
        r.position = static_cast<int>(parse_int("position", f[0]));
        r.task_id = static_cast<int>(parse_int("task_id", f[1]));
        r.instruction = f[2];
        r.selected_rows = parse_int("selected_rows", f[3]);
        r.shared_rows = parse_int("shared_rows", f[4]);
        r.trainable_rows = parse_int("trainable_rows", f[5]);
        r.used_rows_after = parse_int("used_rows_after", f[6]);
        r.fwt_one_epoch = parse_num("fwt_one_epoch", f[7]);
        r.first_loss = parse_num("first_loss", f[8]);
        r.final_loss = parse_num("final_loss", f[9]);
        out.push_back(std::move(r));
    }
    return out;
}

std::string render_sweep_csv(const std::vector<SweepRow>& rows, std::uint64_t manifest) {
    std::string out = "# manifest=" + hex16(manifest) + "\n";
    out += "parameter,value,seed,fwt,nbt,auc,used_rows\n";
    for (const SweepRow& r : rows) {
        out += r.parameter + "," + quote_csv(r.value) + "," + std::to_string(r.seed) + "," +
               g(r.fwt) + "," + g(r.nbt) + "," + g(r.auc) + "," + std::to_string(r.used_rows) + "\n";
    }
    return out;
}

std::string render_success_curve_svg(const SuccessMatrix& m, std::uint64_t manifest) {
    const int W = 640, H = 420;
    const double x0 = 60, x1 = 500, y0 = 360, y1 = 40;
    const int M = m.size();
    std::string s = svg_open(W, H, manifest);
    s += svg_text(x0, 24, "success on each task across training rounds", 13);
    for (int tick = 0; tick <= 4; ++tick) {
        const double v = tick * 0.25;
        const double y = y0 + (y1 - y0) * v;
        s += svg_line(x0, y, x1, y, "#dddddd");
        s += svg_text(x0 - 8, y + 4, g6(v).substr(0, 4), 11, "end");
    }
    for (int i = 0; i < M; ++i) {
        const double x = M == 1 ? (x0 + x1) / 2 : x0 + (x1 - x0) * i / (M - 1);
        s += svg_text(x, y0 + 18, std::to_string(i + 1), 11, "middle");
    }
    s += svg_text((x0 + x1) / 2, y0 + 36, "training round", 12, "middle");
    s += svg_line(x0, y0, x1, y0, "#000000");
    s += svg_line(x0, y0, x0, y1, "#000000");
    for (int task = 0; task < M; ++task) {
        std::string pts;
        for (int round = task; round < M; ++round) {
            const double x = M == 1 ? (x0 + x1) / 2 : x0 + (x1 - x0) * round / (M - 1);
            const double y = y0 + (y1 - y0) * m.at(round, task);
            pts += g6(x) + "," + g6(y) + " ";
        }
        const std::string color = kPalette[task % 10];
        s += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color +
             "\" stroke-width=\"1.5\"/>\n";
        s += svg_text(x1 + 12, y1 + 14 * task + 4, "task " + std::to_string(task + 1), 11);
        s += "<rect x=\"" + g6(x1 + 64.0) + "\" y=\"" + g6(y1 + 14.0 * task - 4) +
             "\" width=\"10\" height=\"10\" fill=\"" + color + "\"/>\n";
    }
    s += "</svg>\n";
    return s;
}

std::string render_token_bars_svg(const std::vector<TaskReport>& reports,
                                  std::int64_t rows_per_task, std::uint64_t manifest) {
    const int W = 640, H = 420;
    const double x0 = 60, x1 = 600, y0 = 360, y1 = 40;
    const int n = static_cast<int>(reports.size());
    std::string s = svg_open(W, H, manifest);
    s += svg_text(x0, 24, "trainable pool rows per task (dashed: fresh-rows-every-task budget)", 13);
    const double top = static_cast<double>(std::max<std::int64_t>(rows_per_task, 1));
    for (int tick = 0; tick <= 4; ++tick) {
        const double v = top * tick / 4;
        const double y = y0 + (y1 - y0) * (v / top);
        s += svg_line(x0, y, x1, y, "#dddddd");
        s += svg_text(x0 - 8, y + 4, std::to_string(static_cast<std::int64_t>(v)), 11, "end");
    }
    const double naive_y = y0 + (y1 - y0) * (static_cast<double>(rows_per_task) / top);
    s += svg_line(x0, naive_y, x1, naive_y, "#d85040", "stroke-dasharray=\"6,4\"");
    const double slot = (x1 - x0) / std::max(1, n);
    for (int i = 0; i < n; ++i) {
        const double bw = slot * 0.6;
        const double bx = x0 + slot * i + slot * 0.2;
        const double frac = static_cast<double>(reports[static_cast<std::size_t>(i)].trainable_rows) / top;
        const double by = y0 + (y1 - y0) * frac;
        s += "<rect x=\"" + g6(bx) + "\" y=\"" + g6(by) + "\" width=\"" + g6(bw) + "\" height=\"" +
             g6(y0 - by) + "\" fill=\"#4063d8\"/>\n";
        s += svg_text(bx + bw / 2, by - 6,
                      std::to_string(reports[static_cast<std::size_t>(i)].trainable_rows), 10,
                      "middle");
        s += svg_text(bx + bw / 2, y0 + 18, std::to_string(i + 1), 11, "middle");
    }
    s += svg_text((x0 + x1) / 2, y0 + 36, "task position", 12, "middle");
    s += svg_line(x0, y0, x1, y0, "#000000");
    s += svg_line(x0, y0, x0, y1, "#000000");
    s += "</svg>\n";
    return s;
}

std::string render_sweep_plot_svg(const std::vector<std::string>& labels,
                                  const std::vector<double>& fwt_values, const std::string& x_label,
                                  std::uint64_t manifest) {
    if (labels.size() != fwt_values.size()) {
        throw ContractError("sweep plot: label and value counts differ");
    }
    const int W = 640, H = 420;
    const double x0 = 60, x1 = 600, y0 = 360, y1 = 40;
    const int n = static_cast<int>(labels.size());
    std::string s = svg_open(W, H, manifest);
    s += svg_text(x0, 24, "forward transfer across " + x_label + " settings", 13);
    for (int tick = 0; tick <= 4; ++tick) {
        const double v = tick * 0.25;
        const double y = y0 + (y1 - y0) * v;
        s += svg_line(x0, y, x1, y, "#dddddd");
        s += svg_text(x0 - 8, y + 4, g6(v).substr(0, 4), 11, "end");
    }
    std::string pts;
    for (int i = 0; i < n; ++i) {
        const double x = n == 1 ? (x0 + x1) / 2 : x0 + (x1 - x0) * i / (n - 1);
        const double y = y0 + (y1 - y0) * std::clamp(fwt_values[static_cast<std::size_t>(i)], 0.0, 1.0);
        pts += g6(x) + "," + g6(y) + " ";
        s += "<circle cx=\"" + g6(x) + "\" cy=\"" + g6(y) + "\" r=\"3.5\" fill=\"#4063d8\"/>\n";
        s += svg_text(x, y0 + 18, labels[static_cast<std::size_t>(i)], 11, "middle");
    }
    s += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"#4063d8\" stroke-width=\"1.5\"/>\n";
    s += svg_text((x0 + x1) / 2, y0 + 36, x_label, 12, "middle");
    s += svg_line(x0, y0, x1, y0, "#000000");
    s += svg_line(x0, y0, x0, y1, "#000000");
    s += "</svg>\n";
    return s;
}

std::string render_summary_text(const SuccessMatrix& m, const std::vector<TaskReport>& reports,
                                NbtConvention convention, std::uint64_t manifest) {
    const int M = m.size();
    std::string s = "run " + hex16(manifest) + "\n\n";
    s += "success matrix (row = tasks trained so far, column = evaluated task)\n";
    s += "      ";
    for (int q = 0; q < M; ++q) {
        char head[16];
        std::snprintf(head, sizeof head, "  t%-4d", q + 1);
        s += head;
    }
    s += "\n";
    for (int i = 0; i < M; ++i) {
        char rowhead[16];
        std::snprintf(rowhead, sizeof rowhead, "k=%-4d", i + 1);
        s += rowhead;
        for (int q = 0; q <= i; ++q) {
            s += "  " + g6(m.at(i, q)).substr(0, 5);
        }
        s += "\n";
    }
    s += "\n";
    if (M >= 2) {
        const MetricTriple t = compute_metrics(m, convention);
        s += "fwt = " + g(t.fwt) + "\n";
        s += "nbt = " + g(t.nbt) + "  (" + std::string(nbt_convention_label(convention)) + ")\n";
        s += "auc = " + g(t.auc) + "\n";
    } else {
        double d = 0.0;
        for (int i = 0; i < M; ++i) d += m.at(i, i);
        s += "fwt = " + g(d / M) + "\n";
        s += "nbt undefined for a single task\n";
        s += "auc = " + g(d / M) + "\n";
    }
    s += "\n";
    std::int64_t total_trainable = 0;
    for (const TaskReport& r : reports) {
        s += "task " + std::to_string(r.position + 1) + " (suite id " + std::to_string(r.task_id) +
             "): \"" + r.instruction + "\"\n";
        s += "  rows selected " + std::to_string(r.selected_rows) + ", shared " +
             std::to_string(r.shared_rows) + ", trainable " + std::to_string(r.trainable_rows) +
             ", pool used after " + std::to_string(r.used_rows_after) + "\n";
        s += "  one-epoch success " + g6(r.fwt_one_epoch) + ", loss " + g6(r.first_loss) + " -> " +
             g6(r.final_loss) + "\n";
        total_trainable += r.trainable_rows;
    }
    if (!reports.empty()) {
        s += "\ncumulative trainable rows " + std::to_string(total_trainable) +
             ", pool rows in use " + std::to_string(reports.back().used_rows_after) + "\n";
    }
    return s;
}

std::string render_demos_json(const std::vector<Task>& tasks,
                              const std::vector<std::vector<Demonstration>>& demos,
                              const SuiteParams& params, std::uint64_t manifest) {
    nlohmann::json root;
    root["format"] = "t2s-demos-v1";
    root["manifest"] = hex16(manifest);
    root["suite"] = {{"tasks", params.K},      {"horizon", params.horizon},
                     {"eps", params.eps},      {"a_max", params.a_max},
                     {"r_contact", params.r_contact}, {"seed", params.seed}};
    nlohmann::json jtasks = nlohmann::json::array();
    for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
        const Task& t = tasks[ti];
        nlohmann::json jt;
        jt["id"] = t.id;
        jt["kind"] = t.kind == TaskKind::Reach ? "reach" : "push";
        jt["color"] = t.color;
        jt["region"] = t.region;
        jt["instruction"] = t.instruction;
        jt["goal"] = {t.goal_x, t.goal_y};
        jt["eps"] = t.eps;
        nlohmann::json jdemos = nlohmann::json::array();
        for (const Demonstration& d : demos[ti]) {
            nlohmann::json jd;
            jd["initial"] = {{"agent", {d.initial.agent_x, d.initial.agent_y}},
                             {"object", {d.initial.object_x, d.initial.object_y}}};
            jd["observations"] = d.observations;
            nlohmann::json acts = nlohmann::json::array();
            for (const auto& a : d.actions) acts.push_back({a[0], a[1]});
            jd["actions"] = acts;
            jdemos.push_back(std::move(jd));
        }
        jt["demonstrations"] = std::move(jdemos);
        jtasks.push_back(std::move(jt));
    }
    root["tasks"] = std::move(jtasks);
    return root.dump(2) + "\n";
}

}  // namespace t2s
