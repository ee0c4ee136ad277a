#include "fcomb/backtest.hpp"

#include "fcomb/errors.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>

namespace fcomb {

namespace {

std::string num(double v, int digits = 12) {
    if (std::isnan(v)) return "NA";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path);
    return os;
}

std::string status_name(FoldStatus s) {
    switch (s) {
        case FoldStatus::ok: return "ok";
        case FoldStatus::skipped: return "skipped";
        case FoldStatus::failed: return "failed";
    }
    return "?";
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

}  // namespace

std::string format_lambda(double lambda, bool mean_row) {
    if (mean_row) return "mean";
    return num(lambda, 6);
}

void write_folds_csv(const std::string& path, const BacktestReport& report) {
    auto os = open_out(path);
    os << "ticker,estimator,lambda,fold,y,yhat,yeq,R,hit,win,p_hat\n";
    for (const auto& f : report.folds) {
        if (f.status != FoldStatus::ok) continue;
        os << f.ticker << ',' << to_string(f.estimator) << ',' << format_lambda(f.lambda) << ','
           << f.fold << ',' << num(f.y, 17) << ',' << num(f.yhat, 17) << ',' << num(f.yeq, 17)
           << ',' << num(f.R, 17) << ',' << (f.hit ? 1 : 0) << ','
           << (f.win_applicable ? (f.win ? "1" : "0") : "NA") << ',' << num(f.p_hat, 17) << '\n';
    }
}

void write_fold_issues_csv(const std::string& path, const BacktestReport& report) {
    auto os = open_out(path);
    os << "ticker,estimator,lambda,fold,status,reason\n";
    for (const auto& f : report.folds) {
        if (f.status == FoldStatus::ok) continue;
        os << f.ticker << ',' << to_string(f.estimator) << ',' << format_lambda(f.lambda) << ','
           << f.fold << ',' << status_name(f.status) << ',' << csv_escape(f.reason) << '\n';
    }
}

void write_summary_csv(const std::string& path, const BacktestReport& report) {
    auto os = open_out(path);
    os << "ticker,estimator,lambda,folds,failed,skipped,hit_rate,win_rate\n";
    for (const auto& r : report.rates) {
        os << r.ticker << ',' << to_string(r.estimator) << ','
           << format_lambda(r.lambda, r.mean_over_grid) << ',' << r.folds << ',' << r.failed << ','
           << r.skipped << ',' << num(r.hit_rate) << ',' << num(r.win_rate) << '\n';
    }
}

void print_summary_table(std::ostream& os, const BacktestReport& report) {
    const auto pct = [](double v) {
        if (std::isnan(v)) return std::string("   -  ");
        char buf[32];
        std::snprintf(buf, sizeof buf, "%6.1f", 100.0 * v);
        return std::string(buf);
    };
    os << std::left << std::setw(10) << "ticker" << std::setw(16) << "estimator" << std::setw(8)
       << "lambda" << std::right << std::setw(7) << "folds" << std::setw(8) << "HR %" << std::setw(8)
       << "WR %" << std::setw(8) << "failed" << '\n';
    for (const auto& r : report.rates) {
        os << std::left << std::setw(10) << r.ticker << std::setw(16) << to_string(r.estimator)
           << std::setw(8) << format_lambda(r.lambda, r.mean_over_grid) << std::right << std::setw(7)
           << r.folds << std::setw(8) << pct(r.hit_rate) << std::setw(8) << pct(r.win_rate)
           << std::setw(8) << r.failed << '\n';
    }
}

}  // namespace fcomb
