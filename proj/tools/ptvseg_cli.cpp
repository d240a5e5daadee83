// ptvseg: phantom generation, data preparation, training, cross-validation, evaluation, reporting.

#include "ptvseg/checkpoint.hpp"
#include "ptvseg/cvharness.hpp"
#include "ptvseg/dataprep.hpp"
#include "ptvseg/loss.hpp"
#include "ptvseg/phantom.hpp"
#include "ptvseg/report.hpp"
#include "ptvseg/trainer.hpp"
#include "ptvseg/unet.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

namespace fs = std::filesystem;
using namespace ptvseg;

namespace {

enum ExitCode : int
{
    kOk = 0,
    kUsage = 2,
    kBadConfig = 3,
    kMissingInput = 4,
    kRuntime = 5,
};

constexpr const char* kExitCodeHelp =
    "Exit codes: 0 success, 2 usage error (unknown flag, bad value), 3 invalid configuration,\n"
    "4 missing or unreadable input, 5 runtime failure. On failure one JSON line\n"
    "{\"error\": kind, \"exit_code\": n, \"message\": text} is written to stderr.\n"
    "A config file (--config, TOML/INI) may set any flag; command-line flags override it.\n"
    "Without --out, results go to $PTVSEG_OUT_ROOT/<command> (default root: ./ptvseg_out).";

struct ConfigError : std::runtime_error
{
    using std::runtime_error::runtime_error;
};

struct MissingInput : std::runtime_error
{
    using std::runtime_error::runtime_error;
};

int fail(int code, std::string_view kind, const std::string& message)
{
    std::cerr << nlohmann::json{{"error", kind}, {"exit_code", code}, {"message", message}}.dump() << '\n';
    return code;
}

struct Options
{
    fs::path out;
    fs::path manifest;
    fs::path checkpoint;
    std::vector<fs::path> metrics;

    PhantomSpec phantom;
    std::size_t slices = 0;  // 0 keeps the spec's min/max

    UNetConfig unet;
    TrainConfig train;
    std::string loss = "bcel";
    double threshold = 0.5;
    std::size_t jobs = 1;
    std::size_t rotation = 0;
    std::size_t folds = 5;
};

fs::path resolve_out(const Options& o, const std::string& command)
{
    if (!o.out.empty())
        return o.out;
    const char* root = std::getenv("PTVSEG_OUT_ROOT");
    return fs::path(root && *root ? root : "ptvseg_out") / command;
}

void require_file(const fs::path& p, const std::string& what)
{
    if (p.empty())
        throw ConfigError(what + " is required");
    if (!fs::is_regular_file(p))
        throw MissingInput(what + " not found: " + p.string());
}

std::vector<LossKind> losses_of(const std::string& name, bool allow_both)
{
    if (allow_both && name == "both")
        return {LossKind::Bce, LossKind::Dice};
    try
    {
        return {parse_loss_kind(name)};
    }
    catch (const std::exception&)
    {
        throw ConfigError("unknown loss '" + name + "'" + (allow_both ? " (bcel, dice or both)" : " (bcel or dice)"));
    }
}

std::vector<PatientRecord> load_patients(const fs::path& manifest)
{
    require_file(manifest, "--manifest");
    auto loaded = load_dataset(manifest);
    for (const auto& w : loaded.warnings)
        std::cerr << "warning: " << w << '\n';
    return std::move(loaded.patients);
}

// Fails early when the network cannot consume the dataset's slice extent.
void check_extents(const std::vector<PatientRecord>& patients, const UNetConfig& unet)
{
    for (const auto& p : patients)
    {
        output_extent(unet, p.rows);
        output_extent(unet, p.cols);
    }
}

void add_model_flags(CLI::App* cmd, Options& o)
{
    cmd->add_option("--base-channels", o.unet.base_channels, "Channels of the first encoder stage")->capture_default_str();
    cmd->add_option("--depth", o.unet.depth, "Number of pooling steps")->capture_default_str();
}

void add_train_flags(CLI::App* cmd, Options& o)
{
    add_model_flags(cmd, o);
    cmd->add_option("--seed", o.train.seed, "Training seed (rotation r uses seed + r)")->required();
    cmd->add_option("--batch-size", o.train.batch_size, "Slices per minibatch")->capture_default_str();
    cmd->add_option("--lr", o.train.learning_rate, "Adam learning rate")->capture_default_str();
    cmd->add_option("--patience", o.train.patience, "Epochs without improvement before stopping")->capture_default_str();
    cmd->add_option("--max-epochs", o.train.max_epochs, "Upper bound on epochs")->capture_default_str();
    cmd->add_option("--threshold", o.threshold, "Probability threshold for predicted masks")->capture_default_str();
    cmd->add_option("--folds", o.folds, "Number of cross-validation folds")->capture_default_str();
}

CvOptions cv_options(const Options& o, LossKind loss)
{
    CvOptions cv;
    cv.unet = o.unet;
    cv.train = o.train;
    cv.train.loss = loss;
    cv.threshold = o.threshold;
    cv.jobs = o.jobs;
    cv.unet.validate();
    cv.train.validate();
    if (!(o.threshold > 0.0 && o.threshold < 1.0))
        throw ConfigError("--threshold must lie in (0, 1)");
    return cv;
}

void print_summary(const std::vector<MetricRow>& rows)
{
    if (rows.empty())
        return;
    for (const auto& r : aggregate_by_loss(rows))
        std::cout << r.loss << ": n=" << r.dsc.count << " DSC " << format_fixed(r.dsc.mean, 4) << " +- "
                  << format_fixed(r.dsc.std, 4) << ", HD95 " << format_fixed(r.hd95.mean, 2) << " +- "
                  << format_fixed(r.hd95.std, 2) << " mm\n";
}

int cmd_phantom(Options& o)
{
    if (o.slices)
        o.phantom.min_slices = o.phantom.max_slices = o.slices;
    o.phantom.validate();
    const fs::path out = resolve_out(o, "phantom");
    const auto patients = generate_dataset(o.phantom);
    const fs::path manifest = write_dataset(patients, out);
    std::cout << "wrote " << patients.size() << " patients to " << manifest.string() << '\n';
    return kOk;
}

int cmd_prep(Options& o)
{
    require_file(o.manifest, "--manifest");
    const fs::path out = resolve_out(o, "prep");
    if (fs::weakly_canonical(out) == fs::weakly_canonical(o.manifest.parent_path()))
        throw ConfigError("--out must differ from the input dataset directory");
    const PrepSummary s = prepare_dataset(o.manifest, out);
    for (const auto& w : s.warnings)
        std::cerr << "warning: " << w << '\n';
    std::cout << "prepared " << s.patients << " patients, " << s.slices << " slices (" << s.rasterized_slices
              << " from contours) into " << s.manifest.string() << '\n';
    return kOk;
}

int cmd_train(Options& o)
{
    const auto kinds = losses_of(o.loss, false);
    const CvOptions base = cv_options(o, kinds.front());
    const auto patients = load_patients(o.manifest);
    const FoldPlan plan = assign_folds(std::span<const PatientRecord>(patients), o.folds);
    if (o.rotation >= plan.rotations.size())
        throw ConfigError("--rotation must be below the fold count");
    check_extents(patients, base.unet);
    CvOptions cv = base;
    cv.out_dir = resolve_out(o, "train");
    const RotationResult r = run_rotation(patients, plan, o.rotation, cv);
    std::cout << "rotation " << r.rotation << ": best epoch " << r.best_epoch << " of " << r.history.size() << ", outputs in "
              << (*cv.out_dir / ("rotation_" + std::to_string(o.rotation))).string() << '\n';
    print_summary(r.metrics);
    return kOk;
}

int cmd_cv(Options& o)
{
    const auto kinds = losses_of(o.loss, true);
    for (auto k : kinds)
        cv_options(o, k);
    const auto patients = load_patients(o.manifest);
    check_extents(patients, o.unet);
    const FoldPlan plan = assign_folds(std::span<const PatientRecord>(patients), o.folds);
    const fs::path out = resolve_out(o, "cv");
    std::vector<MetricRow> all;
    int failed = 0;
    for (auto kind : kinds)
    {
        CvOptions cv = cv_options(o, kind);
        cv.out_dir = kinds.size() > 1 ? out / std::string(loss_name(kind)) : out;
        const auto results = run_cross_validation(patients, plan, cv);
        for (const auto& r : results)
            if (!r.ok)
            {
                ++failed;
                std::cerr << "rotation " << r.rotation << " (" << loss_name(kind) << ") failed: " << r.error << '\n';
            }
        const auto rows = merged_metrics(results);
        all.insert(all.end(), rows.begin(), rows.end());
    }
    if (kinds.size() > 1)
        write_metrics_csv(all, out / "metrics.csv");
    print_summary(all);
    if (failed)
        throw std::runtime_error(std::to_string(failed) + " rotation(s) failed");
    return kOk;
}

int cmd_eval(Options& o)
{
    require_file(o.checkpoint, "--checkpoint");
    const auto kind = losses_of(o.loss, false).front();
    if (!(o.threshold > 0.0 && o.threshold < 1.0))
        throw ConfigError("--threshold must lie in (0, 1)");
    const UNetModel model = load_checkpoint(o.checkpoint);
    const auto patients = load_patients(o.manifest);
    check_extents(patients, model.config);
    const auto rows = evaluate_patients(model, patients, nullptr, kind, o.threshold);
    const fs::path out = resolve_out(o, "eval");
    fs::create_directories(out);
    write_metrics_csv(rows, out / "metrics.csv");
    print_summary(rows);
    return kOk;
}

int cmd_report(Options& o)
{
    if (o.metrics.empty())
        throw ConfigError("--metrics is required");
    std::vector<MetricRow> rows;
    for (const auto& p : o.metrics)
    {
        require_file(p, "--metrics");
        const auto part = read_metrics_csv(p);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    const auto reports = aggregate_by_loss(rows);
    const fs::path out = resolve_out(o, "report");
    fs::create_directories(out);
    write_summary_csv(reports, out / "summary.csv");
    std::ofstream(out / "boxplot_dsc.svg", std::ios::binary) << render_boxplot_svg(reports, PlotMetric::Dsc);
    std::ofstream(out / "boxplot_hd95.svg", std::ios::binary) << render_boxplot_svg(reports, PlotMetric::Hd95);
    std::cout << format_summary_csv(reports);
    return kOk;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"U-Net PTV segmentation toolkit"};
    app.footer(kExitCodeHelp);
    app.set_config("--config", "", "Read flags from a TOML/INI file");
    app.require_subcommand(1);
    app.fallthrough();

    Options o;
    o.train.learning_rate = 1e-3;

    auto* phantom = app.add_subcommand("phantom", "Generate a synthetic dataset and manifest");
    phantom->add_option("--out", o.out, "Output directory");
    phantom->add_option("--seed", o.phantom.seed, "Generator seed")->capture_default_str();
    phantom->add_option("--patients", o.phantom.patients, "Number of patients")->capture_default_str();
    phantom->add_option("--slices", o.slices, "Slices per patient (default: the generator's range)");
    phantom->add_option("--size", o.phantom.size, "Rows and columns per slice")->capture_default_str();
    phantom->add_option("--noise", o.phantom.noise_hu, "Gaussian noise sigma in HU")->capture_default_str();

    auto* prep = app.add_subcommand("prep", "Window images and rasterize contours into a model-ready dataset");
    prep->add_option("--manifest", o.manifest, "Input manifest")->required();
    prep->add_option("--out", o.out, "Output directory");

    auto* train = app.add_subcommand("train", "Train one cross-validation rotation");
    train->add_option("--manifest", o.manifest, "Dataset manifest")->required();
    train->add_option("--out", o.out, "Output directory");
    train->add_option("--loss", o.loss, "bcel or dice")->capture_default_str();
    train->add_option("--rotation", o.rotation, "Rotation index")->capture_default_str();
    add_train_flags(train, o);

    auto* cv = app.add_subcommand("cv", "Run the full cross-validation protocol");
    cv->add_option("--manifest", o.manifest, "Dataset manifest")->required();
    cv->add_option("--out", o.out, "Output directory");
    cv->add_option("--loss", o.loss, "bcel, dice or both")->capture_default_str();
    cv->add_option("--jobs", o.jobs, "Rotations trained in parallel")->capture_default_str();
    add_train_flags(cv, o);

    auto* eval = app.add_subcommand("eval", "Per-patient metrics of a checkpoint");
    eval->add_option("--checkpoint", o.checkpoint, "Model checkpoint")->required();
    eval->add_option("--manifest", o.manifest, "Dataset manifest")->required();
    eval->add_option("--out", o.out, "Output directory");
    eval->add_option("--loss", o.loss, "Loss label written to the CSV")->capture_default_str();
    eval->add_option("--threshold", o.threshold, "Probability threshold")->capture_default_str();

    auto* report = app.add_subcommand("report", "Aggregate metric CSVs into a summary and boxplots");
    report->add_option("--metrics", o.metrics, "Metric CSV files")->required();
    report->add_option("--out", o.out, "Output directory");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp& e)
    {
        return app.exit(e);
    }
    catch (const CLI::CallForAllHelp& e)
    {
        return app.exit(e);
    }
    catch (const CLI::FileError& e)
    {
        return fail(kMissingInput, "missing_input", e.what());
    }
    catch (const CLI::ParseError& e)
    {
        return fail(kUsage, "usage", e.what());
    }

    auto* chosen = app.get_subcommands().front();
    std::cout << "# effective configuration\n[" << chosen->get_name() << "]\n"
              << chosen->config_to_str(true, false) << std::flush;

    try
    {
        if (chosen == phantom)
            return cmd_phantom(o);
        if (chosen == prep)
            return cmd_prep(o);
        if (chosen == train)
            return cmd_train(o);
        if (chosen == cv)
            return cmd_cv(o);
        if (chosen == eval)
            return cmd_eval(o);
        return cmd_report(o);
    }
    catch (const MissingInput& e)
    {
        return fail(kMissingInput, "missing_input", e.what());
    }
    catch (const DatasetError& e)
    {
        if (e.kind() == DatasetError::Kind::MissingFile)
            return fail(kMissingInput, "missing_input", e.what());
        return fail(kRuntime, "invalid_input", e.what());
    }
    catch (const ConfigError& e)
    {
        return fail(kBadConfig, "invalid_config", e.what());
    }
    catch (const std::invalid_argument& e)
    {
        return fail(kBadConfig, "invalid_config", e.what());
    }
    catch (const std::exception& e)
    {
        return fail(kRuntime, "runtime", e.what());
    }
}
