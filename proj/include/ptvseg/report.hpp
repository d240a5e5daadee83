#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ptvseg {

/// One patient's test-time result. Undefined surface distances (empty prediction or truth) are nullopt.
struct MetricRow
{
    std::string loss;
    std::string patient_id;
    std::size_t fold = 0;
    double dsc = 0.0;
    std::optional<double> hd95_mm;
    std::optional<double> hd_mm;
    std::string warnings;

    friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

inline constexpr std::string_view kMetricsCsvHeader = "loss,patient_id,fold,dsc,hd95_mm,hd_mm,warnings";

/// RFC-4180 CSV, CRLF line ends, reals in fixed point with 6 decimals, locale independent.
/// Undefined distances are written as empty fields.
std::string format_metrics_csv(const std::vector<MetricRow>& rows);
void write_metrics_csv(const std::vector<MetricRow>& rows, const std::filesystem::path& path);
std::vector<MetricRow> parse_metrics_csv(std::string_view text);
std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path);

/// Fixed-point formatting via std::to_chars.
std::string format_fixed(double value, int decimals = 6);

/// Tukey box: quartiles by inclusive linear interpolation, whiskers at the most extreme points
/// within 1.5 IQR of the quartiles, outliers beyond.
struct BoxStats
{
    double whisker_low = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double whisker_high = 0.0;
    std::vector<double> outliers;
};

/// Summary of one metric over the cohort; std is the population standard deviation.
struct MetricSummary
{
    std::size_t count = 0;
    std::size_t undefined = 0;  // rows without a value (excluded)
    double mean = 0.0;
    double std = 0.0;
    double min = 0.0;
    double max = 0.0;
    BoxStats box;
};

MetricSummary summarize(const std::vector<double>& values);

struct MetricReport
{
    std::string loss;
    std::vector<MetricRow> rows;
    MetricSummary dsc;
    MetricSummary hd95;
};

class ReportError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Aggregates rows that all belong to one loss kind. Throws ReportError on empty input.
MetricReport aggregate(const std::vector<MetricRow>& rows);

/// Groups rows by their loss column (sorted by loss name) and aggregates each group.
std::vector<MetricReport> aggregate_by_loss(const std::vector<MetricRow>& rows);

enum class PlotMetric { Dsc, Hd95 };

/// Vertical value axis of a boxplot: y = top + (max - v) / (max - min) * (bottom - top).
struct ValueAxis
{
    double min = 0.0;
    double max = 1.0;
    double top = 0.0;
    double bottom = 0.0;

    double to_y(double v) const { return top + (max - v) / (max - min) * (bottom - top); }
};

ValueAxis boxplot_axis(const std::vector<MetricReport>& reports, PlotMetric metric);

/// One box per report, side by side, with labeled axes (DSC unitless, HD95 in mm).
std::string render_boxplot_svg(const std::vector<MetricReport>& reports, PlotMetric metric);

/// Summary table: one line per (loss, metric).
std::string format_summary_csv(const std::vector<MetricReport>& reports);
void write_summary_csv(const std::vector<MetricReport>& reports, const std::filesystem::path& path);

}  // namespace ptvseg
