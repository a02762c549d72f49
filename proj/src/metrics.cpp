#include "sdec/metrics.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "sdec/errors.hpp"

namespace sdec {

namespace {

constexpr const char* kHeader =
    "iteration,objective_L_eta,first_term,second_term,dual_loss,grad_norm_V,"
    "grad_norm_pi,avg_return,consistency_residual,wall_ms";

}  // namespace

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ParseError("bad float field '" + s + "'");
    return v;
}

std::string metrics_to_csv(const std::vector<MetricsRecord>& records) {
    if (records.empty()) throw InvalidValue("metrics must hold at least one record");
    std::string out(kHeader);
    out.push_back('\n');
    for (const auto& r : records) {
        out += std::to_string(r.iteration);
        for (double v : {r.objective_L_eta, r.first_term, r.second_term, r.dual_loss,
                         r.grad_norm_V, r.grad_norm_pi, r.avg_return,
                         r.consistency_residual, r.wall_ms}) {
            out.push_back(',');
            out += format_double(v);
        }
        out.push_back('\n');
    }
    return out;
}

void write_metrics(const std::vector<MetricsRecord>& records, const std::string& path) {
    std::string text = metrics_to_csv(records);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) throw IoError("failed writing metrics to '" + path + "'");
}

std::vector<MetricsRecord> metrics_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kHeader)
        throw ParseError("metrics CSV header mismatch");
    std::vector<MetricsRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            std::size_t comma = line.find(',', start);
            fields.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (fields.size() != 10) throw ParseError("metrics CSV row has wrong arity");
        MetricsRecord r;
        r.iteration = std::stoll(fields[0]);
        r.objective_L_eta = parse_double(fields[1]);
        r.first_term = parse_double(fields[2]);
        r.second_term = parse_double(fields[3]);
        r.dual_loss = parse_double(fields[4]);
        r.grad_norm_V = parse_double(fields[5]);
        r.grad_norm_pi = parse_double(fields[6]);
        r.avg_return = parse_double(fields[7]);
        r.consistency_residual = parse_double(fields[8]);
        r.wall_ms = parse_double(fields[9]);
        out.push_back(r);
    }
    return out;
}

std::vector<MetricsRecord> read_metrics(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "' for reading");
    std::stringstream ss;
    ss << f.rdbuf();
    return metrics_from_csv(ss.str());
}

}  // namespace sdec
