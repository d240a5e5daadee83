#include "ptvseg/report.hpp"

#include "ptvseg/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

namespace ptvseg {

namespace fs = std::filesystem;

std::string format_fixed(double value, int decimals)
{
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::fixed, decimals);
    if (r.ec != std::errc())
        throw ReportError("format_fixed: value out of range");
    std::string s(buf, r.ptr);
    if (s.find_first_not_of("-0.") == std::string::npos && s.front() == '-')
        s.erase(0, 1);  // no "-0.000000"
    return s;
}

namespace {

std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\r\n") == std::string::npos)
        return s;
    std::string q = "\"";
    for (char c : s)
    {
        if (c == '"')
            q += '"';
        q += c;
    }
    return q + "\"";
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text)
{
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool quoted = false, field_started = false;
    for (std::size_t i = 0; i < text.size(); ++i)
    {
        const char c = text[i];
        if (quoted)
        {
            if (c == '"')
            {
                if (i + 1 < text.size() && text[i + 1] == '"')
                {
                    field += '"';
                    ++i;
                }
                else
                {
                    quoted = false;
                }
            }
            else
            {
                field += c;
            }
            continue;
        }
        if (c == '"' && field.empty())
        {
            quoted = field_started = true;
        }
        else if (c == ',')
        {
            record.push_back(std::move(field));
            field.clear();
            field_started = true;
        }
        else if (c == '\r' || c == '\n')
        {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n')
                ++i;
            if (field_started || !field.empty() || !record.empty())
            {
                record.push_back(std::move(field));
                records.push_back(std::move(record));
            }
            record.clear();
            field.clear();
            field_started = false;
        }
        else
        {
            field += c;
            field_started = true;
        }
    }
    if (quoted)
        throw ReportError("CSV: unterminated quoted field");
    if (field_started || !field.empty() || !record.empty())
    {
        record.push_back(std::move(field));
        records.push_back(std::move(record));
    }
    return records;
}

double parse_real(const std::string& s, const char* column)
{
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size())
        throw ReportError(std::string("CSV: column '") + column + "' has non-numeric value '" + s + "'");
    return v;
}

std::string optional_fixed(const std::optional<double>& v)
{
    return v ? format_fixed(*v) : std::string();
}

std::string read_text(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ReportError("cannot open " + path.string());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw ReportError("cannot write " + path.string());
    out << text;
}

}  // namespace

std::string format_metrics_csv(const std::vector<MetricRow>& rows)
{
    std::string out(kMetricsCsvHeader);
    out += "\r\n";
    for (const auto& r : rows)
    {
        out += csv_field(r.loss) + ',' + csv_field(r.patient_id) + ',' + std::to_string(r.fold) + ',' +
               format_fixed(r.dsc) + ',' + optional_fixed(r.hd95_mm) + ',' + optional_fixed(r.hd_mm) + ',' +
               csv_field(r.warnings) + "\r\n";
    }
    return out;
}

void write_metrics_csv(const std::vector<MetricRow>& rows, const fs::path& path)
{
    write_text(path, format_metrics_csv(rows));
}

std::vector<MetricRow> parse_metrics_csv(std::string_view text)
{
    const auto records = parse_csv(text);
    if (records.empty())
        throw ReportError("CSV: missing header");
    std::string header;
    for (std::size_t i = 0; i < records[0].size(); ++i)
        header += (i ? "," : "") + records[0][i];
    if (header != kMetricsCsvHeader)
        throw ReportError("CSV: unexpected header '" + header + "'");

    std::vector<MetricRow> rows;
    for (std::size_t i = 1; i < records.size(); ++i)
    {
        const auto& f = records[i];
        if (f.size() != 7)
            throw ReportError("CSV: line " + std::to_string(i + 1) + " has " + std::to_string(f.size()) + " fields, expected 7");
        MetricRow r;
        r.loss = f[0];
        r.patient_id = f[1];
        r.fold = static_cast<std::size_t>(parse_real(f[2], "fold"));
        r.dsc = parse_real(f[3], "dsc");
        if (!f[4].empty())
            r.hd95_mm = parse_real(f[4], "hd95_mm");
        if (!f[5].empty())
            r.hd_mm = parse_real(f[5], "hd_mm");
        r.warnings = f[6];
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<MetricRow> read_metrics_csv(const fs::path& path)
{
    return parse_metrics_csv(read_text(path));
}

MetricSummary summarize(const std::vector<double>& values)
{
    MetricSummary s;
    s.count = values.size();
    if (values.empty())
        return s;
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());

    double total = 0.0;
    for (double v : values)
        total += v;
    s.mean = total / static_cast<double>(values.size());
    double squares = 0.0;
    for (double v : values)
        squares += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(squares / static_cast<double>(values.size()));
    s.min = sorted.front();
    s.max = sorted.back();

    s.box.q1 = percentile_linear(sorted, 0.25);
    s.box.median = percentile_linear(sorted, 0.5);
    s.box.q3 = percentile_linear(sorted, 0.75);
    const double iqr = s.box.q3 - s.box.q1;
    const double fence_low = s.box.q1 - 1.5 * iqr;
    const double fence_high = s.box.q3 + 1.5 * iqr;
    s.box.whisker_low = s.box.q1;
    s.box.whisker_high = s.box.q3;
    for (double v : sorted)
    {
        if (v < fence_low || v > fence_high)
        {
            s.box.outliers.push_back(v);
            continue;
        }
        s.box.whisker_low = std::min(s.box.whisker_low, v);
        s.box.whisker_high = std::max(s.box.whisker_high, v);
    }
    return s;
}

MetricReport aggregate(const std::vector<MetricRow>& rows)
{
    if (rows.empty())
        throw ReportError("aggregate: no rows");
    MetricReport report;
    report.loss = rows.front().loss;
    report.rows = rows;
    std::vector<double> dsc_values, hd95_values;
    std::size_t undefined = 0;
    for (const auto& r : rows)
    {
        if (r.loss != report.loss)
            throw ReportError("aggregate: rows mix loss kinds '" + report.loss + "' and '" + r.loss + "'");
        dsc_values.push_back(r.dsc);
        if (r.hd95_mm)
            hd95_values.push_back(*r.hd95_mm);
        else
            ++undefined;
    }
    report.dsc = summarize(dsc_values);
    report.hd95 = summarize(hd95_values);
    report.hd95.undefined = undefined;
    return report;
}

std::vector<MetricReport> aggregate_by_loss(const std::vector<MetricRow>& rows)
{
    std::map<std::string, std::vector<MetricRow>> groups;
    for (const auto& r : rows)
        groups[r.loss].push_back(r);
    std::vector<MetricReport> out;
    for (const auto& [loss, group] : groups)
        out.push_back(aggregate(group));
    return out;
}

namespace {

constexpr double kSvgWidth = 480.0;
constexpr double kSvgHeight = 400.0;
constexpr double kPlotLeft = 80.0;
constexpr double kPlotRight = 460.0;
constexpr double kPlotTop = 50.0;
constexpr double kPlotBottom = 340.0;

const MetricSummary& pick(const MetricReport& r, PlotMetric m)
{
    return m == PlotMetric::Dsc ? r.dsc : r.hd95;
}

double nice_ceiling(double v)
{
    if (!(v > 0.0))
        return 1.0;
    const double magnitude = std::pow(10.0, std::floor(std::log10(v)));
    for (double step : {1.0, 2.0, 2.5, 5.0, 10.0})
        if (step * magnitude >= v)
            return step * magnitude;
    return 10.0 * magnitude;
}

std::string display_name(const std::string& loss)
{
    if (loss == "bcel")
        return "BCEL";
    if (loss == "dice")
        return "DL";
    return loss;
}

std::string num(double v)
{
    return format_fixed(v, 3);
}

}  // namespace

ValueAxis boxplot_axis(const std::vector<MetricReport>& reports, PlotMetric metric)
{
    ValueAxis axis{0.0, 1.0, kPlotTop, kPlotBottom};
    if (metric == PlotMetric::Hd95)
    {
        double highest = 0.0;
        for (const auto& r : reports)
            if (pick(r, metric).count > 0)
                highest = std::max(highest, pick(r, metric).max);
        axis.max = nice_ceiling(highest);
    }
    return axis;
}

std::string render_boxplot_svg(const std::vector<MetricReport>& reports, PlotMetric metric)
{
    if (reports.empty())
        throw ReportError("render_boxplot_svg: no reports");
    const ValueAxis axis = boxplot_axis(reports, metric);
    const std::string title = metric == PlotMetric::Dsc ? "DSC" : "HD95";
    const std::string y_label = metric == PlotMetric::Dsc ? "DSC" : "HD95 (mm)";

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(kSvgWidth) << "\" height=\"" << num(kSvgHeight)
        << "\" viewBox=\"0 0 " << num(kSvgWidth) << ' ' << num(kSvgHeight) << "\">\n";
    svg << "<rect x=\"0\" y=\"0\" width=\"" << num(kSvgWidth) << "\" height=\"" << num(kSvgHeight) << "\" fill=\"white\"/>\n";
    svg << "<text class=\"title\" x=\"" << num((kPlotLeft + kPlotRight) / 2) << "\" y=\"28\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"16\">" << title << "</text>\n";

    svg << "<line class=\"axis\" x1=\"" << num(kPlotLeft) << "\" y1=\"" << num(kPlotTop) << "\" x2=\"" << num(kPlotLeft)
        << "\" y2=\"" << num(kPlotBottom) << "\" stroke=\"black\"/>\n";
    svg << "<line class=\"axis\" x1=\"" << num(kPlotLeft) << "\" y1=\"" << num(kPlotBottom) << "\" x2=\"" << num(kPlotRight)
        << "\" y2=\"" << num(kPlotBottom) << "\" stroke=\"black\"/>\n";
    constexpr int kTicks = 5;
    for (int t = 0; t <= kTicks; ++t)
    {
        const double v = axis.min + (axis.max - axis.min) * t / kTicks;
        const double y = axis.to_y(v);
        svg << "<line class=\"tick\" data-value=\"" << num(v) << "\" x1=\"" << num(kPlotLeft - 5) << "\" y1=\"" << num(y)
            << "\" x2=\"" << num(kPlotLeft) << "\" y2=\"" << num(y) << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << num(kPlotLeft - 8) << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\" "
            << "font-family=\"sans-serif\" font-size=\"11\">" << (metric == PlotMetric::Dsc ? format_fixed(v, 1) : format_fixed(v, 0))
            << "</text>\n";
    }
    svg << "<text class=\"ylabel\" x=\"20\" y=\"" << num((kPlotTop + kPlotBottom) / 2) << "\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 20 " << num((kPlotTop + kPlotBottom) / 2)
        << ")\">" << y_label << "</text>\n";
    svg << "<text class=\"xlabel\" x=\"" << num((kPlotLeft + kPlotRight) / 2) << "\" y=\"" << num(kSvgHeight - 12)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">Loss function</text>\n";

    const double slot = (kPlotRight - kPlotLeft) / static_cast<double>(reports.size());
    const double box_width = std::min(80.0, slot * 0.5);
    for (std::size_t i = 0; i < reports.size(); ++i)
    {
        const MetricSummary& s = pick(reports[i], metric);
        const double cx = kPlotLeft + slot * (static_cast<double>(i) + 0.5);
        const double left = cx - box_width / 2;
        const std::string name = display_name(reports[i].loss);
        svg << "<g class=\"series\" data-loss=\"" << name << "\">\n";
        if (s.count > 0)
        {
            svg << "<line class=\"whisker\" x1=\"" << num(cx) << "\" y1=\"" << num(axis.to_y(s.box.whisker_high)) << "\" x2=\""
                << num(cx) << "\" y2=\"" << num(axis.to_y(s.box.q3)) << "\" stroke=\"black\"/>\n";
            svg << "<line class=\"whisker\" x1=\"" << num(cx) << "\" y1=\"" << num(axis.to_y(s.box.q1)) << "\" x2=\"" << num(cx)
                << "\" y2=\"" << num(axis.to_y(s.box.whisker_low)) << "\" stroke=\"black\"/>\n";
            for (double w : {s.box.whisker_low, s.box.whisker_high})
                svg << "<line class=\"cap\" x1=\"" << num(cx - box_width / 4) << "\" y1=\"" << num(axis.to_y(w)) << "\" x2=\""
                    << num(cx + box_width / 4) << "\" y2=\"" << num(axis.to_y(w)) << "\" stroke=\"black\"/>\n";
            svg << "<rect class=\"box\" x=\"" << num(left) << "\" y=\"" << num(axis.to_y(s.box.q3)) << "\" width=\""
                << num(box_width) << "\" height=\"" << num(axis.to_y(s.box.q1) - axis.to_y(s.box.q3))
                << "\" fill=\"#9ecae1\" stroke=\"black\"/>\n";
            svg << "<line class=\"median\" x1=\"" << num(left) << "\" y1=\"" << num(axis.to_y(s.box.median)) << "\" x2=\""
                << num(left + box_width) << "\" y2=\"" << num(axis.to_y(s.box.median)) << "\" stroke=\"#d62728\" stroke-width=\"2\"/>\n";
            for (double o : s.box.outliers)
                svg << "<circle class=\"outlier\" cx=\"" << num(cx) << "\" cy=\"" << num(axis.to_y(o))
                    << "\" r=\"3\" fill=\"none\" stroke=\"black\"/>\n";
        }
        svg << "<text x=\"" << num(cx) << "\" y=\"" << num(kPlotBottom + 18) << "\" text-anchor=\"middle\" "
            << "font-family=\"sans-serif\" font-size=\"12\">" << name << " (" << num(s.mean) << " &#177; " << num(s.std)
            << ")</text>\n";
        svg << "</g>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

std::string format_summary_csv(const std::vector<MetricReport>& reports)
{
    std::string out = "loss,metric,unit,n,n_undefined,mean,std_population,min,whisker_low,q1,median,q3,whisker_high,max,n_outliers\r\n";
    for (const auto& r : reports)
        for (PlotMetric m : {PlotMetric::Dsc, PlotMetric::Hd95})
        {
            const MetricSummary& s = pick(r, m);
            out += csv_field(r.loss) + ',' + (m == PlotMetric::Dsc ? "dsc,1" : "hd95,mm") + ',' + std::to_string(s.count) + ',' +
                   std::to_string(s.undefined) + ',' + format_fixed(s.mean) + ',' + format_fixed(s.std) + ',' +
                   format_fixed(s.min) + ',' + format_fixed(s.box.whisker_low) + ',' + format_fixed(s.box.q1) + ',' +
                   format_fixed(s.box.median) + ',' + format_fixed(s.box.q3) + ',' + format_fixed(s.box.whisker_high) + ',' +
                   format_fixed(s.max) + ',' + std::to_string(s.box.outliers.size()) + "\r\n";
        }
    return out;
}

void write_summary_csv(const std::vector<MetricReport>& reports, const fs::path& path)
{
    write_text(path, format_summary_csv(reports));
}

}  // namespace ptvseg
