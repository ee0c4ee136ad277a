#pragma once

#include <Eigen/Dense>

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fcomb {

/// Calendar quarter written as `YYYYQn`.
struct Quarter {
    int year = 0;
    int q = 1;  // 1..4

    static Quarter parse(std::string_view text);
    [[nodiscard]] std::string str() const;
    [[nodiscard]] Quarter next() const;
    [[nodiscard]] int ordinal() const { return year * 4 + (q - 1); }

    auto operator<=>(const Quarter&) const = default;
};

/// One ticker's actuals and analyst forecasts on the original (positive) scale.
///
/// `forecasts[t][j]` is analyst j's most recent forecast for quarter t.
struct RawPanel {
    std::string ticker;
    std::vector<Quarter> quarters;
    std::vector<double> actuals;
    std::vector<std::string> analyst_ids;
    std::vector<std::vector<std::optional<double>>> forecasts;

    [[nodiscard]] std::size_t num_quarters() const { return quarters.size(); }
    [[nodiscard]] std::size_t num_analysts() const { return analyst_ids.size(); }

    /// Throws DomainError / ContractError if any panel invariant is broken.
    void validate() const;
};

/// Log-scale panel. Missing cells hold NaN in `X` and false in `mask`.
struct ForecastPanel {
    std::string ticker;
    std::vector<Quarter> quarters;
    std::vector<std::string> analyst_ids;
    Eigen::VectorXd y;
    Eigen::MatrixXd X;
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask;

    [[nodiscard]] std::size_t num_quarters() const { return static_cast<std::size_t>(y.size()); }
    [[nodiscard]] std::size_t num_analysts() const { return static_cast<std::size_t>(X.cols()); }
    [[nodiscard]] bool present(std::size_t t, std::size_t j) const {
        return mask(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j));
    }
    /// Equal-weight mean over every analyst with a forecast in row t; nullopt when the row is empty.
    [[nodiscard]] std::optional<double> row_consensus(std::size_t t) const;
};

/// Training window ending at anchor t (rows t-L+1..t) restricted to a set of analysts,
/// plus those analysts' forecasts for the target row t+1. Never holds y at the target.
struct WindowView {
    std::size_t start = 0;
    std::size_t end = 0;
    std::size_t target = 0;
    std::vector<std::size_t> analysts;  // panel column indices
    Eigen::VectorXd y;                  // L
    Eigen::MatrixXd X;                  // L x m, NaN where missing
    Eigen::VectorXd consensus;          // L, equal-weight benchmark per row
    Eigen::VectorXd target_x;           // m

    [[nodiscard]] std::size_t length() const { return static_cast<std::size_t>(y.size()); }
    [[nodiscard]] std::size_t num_analysts() const { return static_cast<std::size_t>(X.cols()); }
    [[nodiscard]] bool complete() const { return !X.hasNaN(); }
};

/// Builds the window for anchor `t` (0-based) with look-back `L`.
///
/// The per-row consensus is the mean over every analyst with a forecast in that row,
/// not only the selected ones.
/// Throws ContractError when the window falls outside the panel or an analyst
/// has no forecast for the target row.
WindowView make_window(const ForecastPanel& panel, std::size_t anchor, std::size_t L,
                       std::vector<std::size_t> analysts);

/// Builds a window directly (tests, single fits). Without `consensus` the row means of X
/// are used.
WindowView make_window(Eigen::VectorXd y, Eigen::MatrixXd X, Eigen::VectorXd target_x,
                       std::optional<Eigen::VectorXd> consensus = std::nullopt);

/// Column names used when reading panel CSV files.
struct CsvSchema {
    std::string ticker = "ticker";
    std::string quarter = "quarter";
    std::string analyst = "analyst_id";
    std::string forecast = "forecast";
    std::string forecast_date = "forecast_date";  // optional column
    std::string actual = "actual";
};

/// Where the long-format CSVs live. `actuals` may be empty when the forecast
/// file carries an `actual` column.
struct PanelSource {
    std::filesystem::path forecasts;
    std::filesystem::path actuals;

    /// A directory resolves to `<dir>/forecasts.csv` + `<dir>/actuals.csv`.
    static PanelSource resolve(const std::filesystem::path& path);
};

/// Loads every ticker found in the source, sorted by ticker.
std::vector<RawPanel> load_panels(const PanelSource& source, const CsvSchema& schema = {});

/// Loads a single-ticker source; throws SchemaError if the file holds several tickers
/// and `ticker` is empty, or the requested ticker is absent.
RawPanel load_panel(const PanelSource& source, const CsvSchema& schema = {},
                    const std::string& ticker = {});

/// Writes panels in the long format (`forecasts.csv`, `actuals.csv`) under `dir`.
void write_panels(const std::filesystem::path& dir, const std::vector<RawPanel>& panels);

ForecastPanel to_log(const RawPanel& raw);

/// Settings for the synthetic panel generator (log scale throughout).
///
/// y_t = level + growth*t + seasonal(t) + shock, and analyst j reports
/// x_{t,j} = y_t + bias_j + e_{t,j} with e an AR(1) of stationary sd `noise_sd_j`.
struct SynthConfig {
    std::string ticker = "SYN";
    std::size_t quarters = 36;
    std::size_t analysts = 10;
    Quarter first_quarter{2015, 1};
    double base_log_level = 9.0;
    double growth = 0.02;
    double seasonal_amplitude = 0.0;
    double actual_noise_sd = 0.03;
    double bias_min = 0.0;
    double bias_max = 0.0;
    double noise_sd_min = 0.01;
    double noise_sd_max = 0.05;
    std::vector<double> noise_sd;  // overrides the range when non-empty
    std::vector<double> bias;      // overrides the range when non-empty
    double phi = 0.0;              // persistence of each analyst's error
    double missing_rate = 0.0;

    void validate() const;
};

RawPanel synthesize_panel(const SynthConfig& config, std::uint64_t seed);

}  // namespace fcomb
