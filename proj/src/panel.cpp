#include "fcomb/panel.hpp"

#include "csv.hpp"
#include "fcomb/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <sstream>

namespace fcomb {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double parse_positive(const std::string& text, const std::string& what, std::size_t line) {
    double value = 0.0;
    try {
        std::size_t used = 0;
        value = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
    } catch (const std::exception&) {
        throw ParseError("line " + std::to_string(line) + ": cannot parse " + what + " '" +
                         text + "'");
    }
    if (!(value > 0.0) || !std::isfinite(value)) {
        throw DomainError("line " + std::to_string(line) + ": " + what + " must be positive, got " +
                          text);
    }
    return value;
}

// Later forecast_date wins; numeric dates compare numerically, others lexically.
bool is_more_recent(const std::string& candidate, const std::string& incumbent) {
    if (candidate.empty() || incumbent.empty()) return true;
    char* c_end = nullptr;
    char* i_end = nullptr;
    const double c = std::strtod(candidate.c_str(), &c_end);
    const double i = std::strtod(incumbent.c_str(), &i_end);
    if (*c_end == '\0' && *i_end == '\0') return c >= i;
    return candidate >= incumbent;
}

struct ForecastCell {
    double value = 0.0;
    std::string date;
};

struct TickerAccumulator {
    std::map<Quarter, double> actuals;
    std::map<std::string, std::map<Quarter, ForecastCell>> forecasts;  // analyst -> quarter
};

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

Quarter Quarter::parse(std::string_view text) {
    const auto bad = [&] { return ParseError("unparseable quarter '" + std::string(text) + "'"); };
    if (text.size() != 6 || (text[4] != 'Q' && text[4] != 'q')) throw bad();
    Quarter out;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + 4, out.year);
    if (ec != std::errc{} || ptr != text.data() + 4) throw bad();
    if (text[5] < '1' || text[5] > '4') throw bad();
    out.q = text[5] - '0';
    return out;
}

std::string Quarter::str() const { return std::to_string(year) + "Q" + std::to_string(q); }

Quarter Quarter::next() const { return q == 4 ? Quarter{year + 1, 1} : Quarter{year, q + 1}; }

void RawPanel::validate() const {
    const std::size_t T = quarters.size();
    if (actuals.size() != T || forecasts.size() != T) {
        throw ContractError(ticker + ": quarters, actuals and forecast rows differ in length");
    }
    for (std::size_t t = 1; t < T; ++t) {
        if (!(quarters[t - 1] < quarters[t])) {
            throw ContractError(ticker + ": quarters not strictly increasing at " +
                                quarters[t].str());
        }
    }
    std::vector<bool> seen(analyst_ids.size(), false);
    for (std::size_t t = 0; t < T; ++t) {
        if (!(actuals[t] > 0.0) || !std::isfinite(actuals[t])) {
            throw DomainError(ticker + " " + quarters[t].str() + ": actual must be positive");
        }
        if (forecasts[t].size() != analyst_ids.size()) {
            throw ContractError(ticker + ": forecast row width mismatch at " + quarters[t].str());
        }
        for (std::size_t j = 0; j < analyst_ids.size(); ++j) {
            if (!forecasts[t][j]) continue;
            if (!(*forecasts[t][j] > 0.0) || !std::isfinite(*forecasts[t][j])) {
                throw DomainError(ticker + " " + quarters[t].str() + " analyst " + analyst_ids[j] +
                                  ": forecast must be positive");
            }
            seen[j] = true;
        }
    }
    for (std::size_t j = 0; j < analyst_ids.size(); ++j) {
        if (!seen[j]) throw ContractError(ticker + ": analyst " + analyst_ids[j] + " has no forecasts");
    }
}

std::optional<double> ForecastPanel::row_consensus(std::size_t t) const {
    double sum = 0.0;
    int n = 0;
    const auto row = static_cast<Eigen::Index>(t);
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        if (mask(row, j)) {
            sum += X(row, j);
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / n;
}

WindowView make_window(const ForecastPanel& panel, std::size_t anchor, std::size_t L,
                       std::vector<std::size_t> analysts) {
    if (L == 0 || anchor + 1 < L || anchor + 1 >= panel.num_quarters()) {
        throw ContractError("window with anchor " + std::to_string(anchor) + " and L=" +
                            std::to_string(L) + " does not fit a panel of " +
                            std::to_string(panel.num_quarters()) + " quarters");
    }
    WindowView w;
    w.start = anchor + 1 - L;
    w.end = anchor;
    w.target = anchor + 1;
    const auto m = static_cast<Eigen::Index>(analysts.size());
    const auto rows = static_cast<Eigen::Index>(L);
    w.y = panel.y.segment(static_cast<Eigen::Index>(w.start), rows);
    w.X.resize(rows, m);
    w.consensus.resize(rows);
    w.target_x.resize(m);
    for (Eigen::Index c = 0; c < m; ++c) {
        const auto j = static_cast<Eigen::Index>(analysts[static_cast<std::size_t>(c)]);
        if (j >= panel.X.cols()) throw ContractError("analyst index out of range");
        const auto tgt = static_cast<Eigen::Index>(w.target);
        if (!panel.mask(tgt, j)) {
            throw ContractError("analyst " + panel.analyst_ids[static_cast<std::size_t>(j)] +
                                " has no forecast for the target quarter");
        }
        w.target_x(c) = panel.X(tgt, j);
        for (Eigen::Index r = 0; r < rows; ++r) {
            const auto t = static_cast<Eigen::Index>(w.start) + r;
            w.X(r, c) = panel.mask(t, j) ? panel.X(t, j) : kNaN;
        }
    }
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto c = panel.row_consensus(w.start + static_cast<std::size_t>(r));
        w.consensus(r) = c ? *c : kNaN;
    }
    w.analysts = std::move(analysts);
    return w;
}

WindowView make_window(Eigen::VectorXd y, Eigen::MatrixXd X, Eigen::VectorXd target_x,
                       std::optional<Eigen::VectorXd> consensus) {
    if (X.rows() != y.size() || X.cols() != target_x.size()) {
        throw ContractError("window dimensions disagree");
    }
    WindowView w;
    const auto L = static_cast<std::size_t>(y.size());
    w.start = 0;
    w.end = L == 0 ? 0 : L - 1;
    w.target = L;
    w.analysts.resize(static_cast<std::size_t>(X.cols()));
    for (std::size_t j = 0; j < w.analysts.size(); ++j) w.analysts[j] = j;
    if (consensus && consensus->size() != y.size()) {
        throw ContractError("consensus length does not match the window");
    }
    w.consensus.resize(y.size());
    for (Eigen::Index r = 0; r < X.rows() && !consensus; ++r) {
        double sum = 0.0;
        int n = 0;
        for (Eigen::Index c = 0; c < X.cols(); ++c) {
            if (!std::isnan(X(r, c))) {
                sum += X(r, c);
                ++n;
            }
        }
        w.consensus(r) = n > 0 ? sum / n : kNaN;
    }
    if (consensus) w.consensus = std::move(*consensus);
    w.y = std::move(y);
    w.X = std::move(X);
    w.target_x = std::move(target_x);
    return w;
}

PanelSource PanelSource::resolve(const std::filesystem::path& path) {
    namespace fs = std::filesystem;
    if (fs::is_directory(path)) {
        PanelSource s{path / "forecasts.csv", path / "actuals.csv"};
        if (!fs::exists(s.forecasts)) throw SchemaError("missing " + s.forecasts.string());
        if (!fs::exists(s.actuals)) s.actuals.clear();
        return s;
    }
    if (!fs::exists(path)) throw SchemaError("no such file: " + path.string());
    return PanelSource{path, {}};
}

std::vector<RawPanel> load_panels(const PanelSource& source, const CsvSchema& schema) {
    const detail::CsvTable fc = detail::read_csv(source.forecasts);
    const auto c_ticker = fc.require(schema.ticker);
    const auto c_quarter = fc.require(schema.quarter);
    const auto c_analyst = fc.require(schema.analyst);
    const auto c_forecast = fc.require(schema.forecast);
    const auto c_date = fc.find(schema.forecast_date);

    std::map<std::string, TickerAccumulator> acc;

    std::optional<std::size_t> c_inline_actual;
    if (source.actuals.empty()) {
        c_inline_actual = fc.find(schema.actual);
        if (!c_inline_actual) {
            throw SchemaError(source.forecasts.string() + ": missing column '" + schema.actual +
                              "' and no actuals file given");
        }
    } else {
        const detail::CsvTable ac = detail::read_csv(source.actuals);
        const auto a_ticker = ac.require(schema.ticker);
        const auto a_quarter = ac.require(schema.quarter);
        const auto a_actual = ac.require(schema.actual);
        for (std::size_t r = 0; r < ac.rows.size(); ++r) {
            const auto& row = ac.rows[r];
            const std::size_t line = r + 2;
            Quarter q;
            try {
                q = Quarter::parse(row[a_quarter]);
            } catch (const ParseError& e) {
                throw ParseError(source.actuals.string() + " line " + std::to_string(line) + ": " +
                                 e.what());
            }
            acc[row[a_ticker]].actuals[q] = parse_positive(row[a_actual], "actual", line);
        }
    }

    for (std::size_t r = 0; r < fc.rows.size(); ++r) {
        const auto& row = fc.rows[r];
        const std::size_t line = r + 2;
        Quarter q;
        try {
            q = Quarter::parse(row[c_quarter]);
        } catch (const ParseError& e) {
            throw ParseError(source.forecasts.string() + " line " + std::to_string(line) + ": " +
                             e.what());
        }
        auto& ticker = acc[row[c_ticker]];
        if (c_inline_actual && !row[*c_inline_actual].empty()) {
            ticker.actuals[q] = parse_positive(row[*c_inline_actual], "actual", line);
        }
        const double value = parse_positive(row[c_forecast], "forecast", line);
        std::string date = c_date ? row[*c_date] : std::string{};
        auto& cells = ticker.forecasts[row[c_analyst]];
        auto it = cells.find(q);
        if (it == cells.end()) {
            cells.emplace(q, ForecastCell{value, std::move(date)});
        } else if (is_more_recent(date, it->second.date)) {
            it->second = ForecastCell{value, std::move(date)};
        }
    }

    std::vector<RawPanel> panels;
    for (auto& [name, a] : acc) {
        RawPanel p;
        p.ticker = name;
        std::map<Quarter, std::size_t> row_of;
        for (const auto& [q, v] : a.actuals) {
            row_of[q] = p.quarters.size();
            p.quarters.push_back(q);
            p.actuals.push_back(v);
        }
        p.forecasts.assign(p.quarters.size(), {});
        for (const auto& [analyst, cells] : a.forecasts) {
            const std::size_t j = p.analyst_ids.size();
            p.analyst_ids.push_back(analyst);
            for (auto& row : p.forecasts) row.emplace_back();
            for (const auto& [q, cell] : cells) {
                const auto rit = row_of.find(q);
                if (rit == row_of.end()) {
                    throw SchemaError(name + ": forecast for " + q.str() +
                                      " has no matching actual");
                }
                p.forecasts[rit->second][j] = cell.value;
            }
        }
        p.validate();
        panels.push_back(std::move(p));
    }
    return panels;
}

RawPanel load_panel(const PanelSource& source, const CsvSchema& schema, const std::string& ticker) {
    auto panels = load_panels(source, schema);
    if (ticker.empty()) {
        if (panels.size() != 1) {
            throw SchemaError("expected one ticker, found " + std::to_string(panels.size()));
        }
        return std::move(panels.front());
    }
    for (auto& p : panels) {
        if (p.ticker == ticker) return std::move(p);
    }
    throw SchemaError("ticker '" + ticker + "' not found");
}

void write_panels(const std::filesystem::path& dir, const std::vector<RawPanel>& panels) {
    std::filesystem::create_directories(dir);
    std::ofstream fout(dir / "forecasts.csv", std::ios::binary);
    std::ofstream aout(dir / "actuals.csv", std::ios::binary);
    if (!fout || !aout) throw ConfigError("cannot write panel files under " + dir.string());
    fout << "ticker,quarter,analyst_id,forecast\n";
    aout << "ticker,quarter,actual\n";
    for (const auto& p : panels) {
        for (std::size_t t = 0; t < p.num_quarters(); ++t) {
            aout << p.ticker << ',' << p.quarters[t].str() << ',' << format_double(p.actuals[t])
                 << '\n';
            for (std::size_t j = 0; j < p.num_analysts(); ++j) {
                if (!p.forecasts[t][j]) continue;
                fout << p.ticker << ',' << p.quarters[t].str() << ',' << p.analyst_ids[j] << ','
                     << format_double(*p.forecasts[t][j]) << '\n';
            }
        }
    }
}

ForecastPanel to_log(const RawPanel& raw) {
    raw.validate();
    ForecastPanel out;
    out.ticker = raw.ticker;
    out.quarters = raw.quarters;
    out.analyst_ids = raw.analyst_ids;
    const auto T = static_cast<Eigen::Index>(raw.num_quarters());
    const auto M = static_cast<Eigen::Index>(raw.num_analysts());
    out.y.resize(T);
    out.X = Eigen::MatrixXd::Constant(T, M, kNaN);
    out.mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(T, M, false);
    for (Eigen::Index t = 0; t < T; ++t) {
        const auto& row = raw.forecasts[static_cast<std::size_t>(t)];
        out.y(t) = std::log(raw.actuals[static_cast<std::size_t>(t)]);
        for (Eigen::Index j = 0; j < M; ++j) {
            if (const auto& f = row[static_cast<std::size_t>(j)]) {
                out.X(t, j) = std::log(*f);
                out.mask(t, j) = true;
            }
        }
    }
    return out;
}

void SynthConfig::validate() const {
    if (!(missing_rate >= 0.0 && missing_rate < 1.0)) {
        throw ConfigError("missing rate must lie in [0, 1)");
    }
    if (quarters == 0 || analysts == 0) throw ConfigError("need at least one quarter and analyst");
    if (!noise_sd.empty() && noise_sd.size() != analysts) {
        throw ConfigError("noise_sd must list one value per analyst");
    }
    if (!bias.empty() && bias.size() != analysts) {
        throw ConfigError("bias must list one value per analyst");
    }
    if (noise_sd_min < 0.0 || noise_sd_max < noise_sd_min) throw ConfigError("bad noise sd range");
    if (bias_max < bias_min) throw ConfigError("bad bias range");
    if (!(phi > -1.0 && phi < 1.0)) throw ConfigError("phi must lie in (-1, 1)");
    for (double s : noise_sd) {
        if (s < 0.0) throw ConfigError("noise sd must be nonnegative");
    }
}

RawPanel synthesize_panel(const SynthConfig& config, std::uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    const std::size_t T = config.quarters;
    const std::size_t M = config.analysts;

    std::vector<double> sd(M), bias(M);
    for (std::size_t j = 0; j < M; ++j) {
        sd[j] = config.noise_sd.empty()
                    ? config.noise_sd_min + (config.noise_sd_max - config.noise_sd_min) * unif(rng)
                    : config.noise_sd[j];
        bias[j] = config.bias.empty()
                      ? config.bias_min + (config.bias_max - config.bias_min) * unif(rng)
                      : config.bias[j];
    }

    RawPanel p;
    p.ticker = config.ticker;
    p.quarters.reserve(T);
    Quarter q = config.first_quarter;
    for (std::size_t t = 0; t < T; ++t, q = q.next()) p.quarters.push_back(q);
    for (std::size_t j = 0; j < M; ++j) {
        char id[16];
        std::snprintf(id, sizeof id, "A%03zu", j + 1);
        p.analyst_ids.emplace_back(id);
    }

    constexpr double kPi = 3.14159265358979323846;
    const double innovation_scale = std::sqrt(1.0 - config.phi * config.phi);
    std::vector<double> err(M);
    for (std::size_t j = 0; j < M; ++j) err[j] = sd[j] * normal(rng);

    p.actuals.resize(T);
    p.forecasts.assign(T, std::vector<std::optional<double>>(M));
    for (std::size_t t = 0; t < T; ++t) {
        const double season =
            config.seasonal_amplitude * std::sin(2.0 * kPi * static_cast<double>(t) / 4.0);
        const double y = config.base_log_level + config.growth * static_cast<double>(t) + season +
                         config.actual_noise_sd * normal(rng);
        p.actuals[t] = std::exp(y);
        for (std::size_t j = 0; j < M; ++j) {
            if (t > 0) err[j] = config.phi * err[j] + innovation_scale * sd[j] * normal(rng);
            const double x = y + bias[j] + err[j];
            const bool missing = unif(rng) < config.missing_rate;
            if (!missing) p.forecasts[t][j] = std::exp(x);
        }
    }
    // Each analyst must appear at least once; revive a deterministic cell if not.
    for (std::size_t j = 0; j < M; ++j) {
        bool any = false;
        for (std::size_t t = 0; t < T && !any; ++t) any = p.forecasts[t][j].has_value();
        if (!any) {
            const std::size_t t = j % T;
            p.forecasts[t][j] = std::exp(std::log(p.actuals[t]) + bias[j]);
        }
    }
    return p;
}

}  // namespace fcomb
