#include "keec/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "keec/errors.hpp"

namespace keec {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string hex32(std::uint32_t v) {
    char buf[12];
    std::snprintf(buf, sizeof(buf), "%08x", v);
    return buf;
}

}  // namespace

void EvalReport::finalize() {
    const std::size_t n = rewards.size();
    if (n == 0) {
        mean = 0.0;
        stddev = 0.0;
        return;
    }
    double sum = 0.0;
    for (double r : rewards) sum += r;
    mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (double r : rewards) sq += (r - mean) * (r - mean);
    stddev = std::sqrt(sq / static_cast<double>(n));
}

void write_report_csv(const std::string& path, const EvalReport& report) {
    if (report.rewards.size() != report.lengths.size())
        throw DimensionError("report: rewards and lengths differ in length");
    std::ostringstream out;
    out << "env," << report.env_name << "\n";
    out << "config_hash," << hex32(report.config_hash) << "\n";
    out << "episodes," << report.rewards.size() << "\n";
    out << "mean," << fmt(report.mean) << "\n";
    out << "std," << fmt(report.stddev) << "\n";
    out << "diverged," << report.diverged << "\n";
    out << "episode,reward,length\n";
    for (std::size_t i = 0; i < report.rewards.size(); ++i)
        out << i << "," << fmt(report.rewards[i]) << "," << report.lengths[i] << "\n";

    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open '" + tmp + "' for writing");
        f << out.str();
        if (!f) throw IoError("short write to '" + tmp + "'");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw IoError("cannot rename '" + tmp + "' to '" + path + "'");
}

std::string summary_text(const EvalReport& report) {
    double lo = 0.0, hi = 0.0;
    if (!report.rewards.empty()) {
        lo = hi = report.rewards.front();
        for (double r : report.rewards) {
            lo = std::min(lo, r);
            hi = std::max(hi, r);
        }
    }
    std::ostringstream out;
    out << "{\n";
    out << "  \"env\": \"" << report.env_name << "\",\n";
    out << "  \"episodes\": " << report.rewards.size() << ",\n";
    out << "  \"mean\": " << fmt(report.mean) << ",\n";
    out << "  \"std\": " << fmt(report.stddev) << ",\n";
    out << "  \"min\": " << fmt(lo) << ",\n";
    out << "  \"max\": " << fmt(hi) << ",\n";
    out << "  \"diverged\": " << report.diverged << ",\n";
    out << "  \"wall_ms_per_step\": " << fmt(report.wall_ms_per_step) << ",\n";
    out << "  \"config_hash\": \"" << hex32(report.config_hash) << "\"\n";
    out << "}\n";
    return out.str();
}

}  // namespace keec
