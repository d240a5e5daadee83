#pragma once

#include "ptvseg/dataprep.hpp"
#include "ptvseg/metrics.hpp"
#include "ptvseg/report.hpp"
#include "ptvseg/trainer.hpp"
#include "ptvseg/unet.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ptvseg {

struct Rotation
{
    std::size_t index = 0;
    std::size_t test_fold = 0;
    std::size_t val_fold = 0;
    std::vector<std::size_t> train_folds;
};

struct FoldPlan
{
    std::size_t k = 5;
    std::map<std::string, std::size_t> fold_of;     // patient id -> fold
    std::vector<std::vector<std::string>> folds;    // ids per fold, in date order
    std::vector<Rotation> rotations;

    std::vector<std::string> ids_in(std::span<const std::size_t> fold_indices) const;
};

struct PatientKey
{
    std::string id;
    std::string acquisition_date;
};

/// Sorts by (acquisition_date, id) and deals round-robin into k folds, so each fold holds one
/// of every k consecutive date ranks. Rotation r tests on fold r, validates on (r + 1) mod k
/// and trains on the rest. Throws std::invalid_argument when fewer than k patients.
FoldPlan assign_folds(std::span<const PatientKey> patients, std::size_t k = 5);
FoldPlan assign_folds(std::span<const PatientRecord> patients, std::size_t k = 5);

/// Model input for every slice: windowed, quantized to 8 bits and scaled to [0, 1]. The mask is
/// center-cropped to the network output extent (a no-op under same padding).
std::vector<Sample> make_samples(std::span<const PatientRecord> patients, const UNetConfig& config);

/// Slice-wise inference, thresholded and stacked in z order with the patient's spacing. Under
/// valid padding the output is centered in the slice and the border predicted as background.
BinaryVolume predict_patient(const UNetModel& model, const PatientRecord& patient, double threshold = 0.5);

struct CvOptions
{
    UNetConfig unet;
    TrainConfig train;
    double threshold = 0.5;
    std::size_t jobs = 1;
    /// When set, rotation_<r>/ directories and metrics.csv are written here.
    std::optional<std::filesystem::path> out_dir;
};

struct RotationResult
{
    std::size_t rotation = 0;
    bool ok = false;
    std::string error;
    UNetModel checkpoint;  // best validation loss
    std::size_t best_epoch = 0;
    std::vector<EpochRecord> history;
    std::vector<MetricRow> metrics;
};

/// Per-patient metrics of `model` on `patients` (3D volume DSC, HD95 and HD).
std::vector<MetricRow> evaluate_patients(const UNetModel& model, std::span<const PatientRecord> patients,
                                         const FoldPlan* plan, LossKind loss, double threshold);

/// Trains rotation r with seed train.seed + r and evaluates its best checkpoint on the test fold.
RotationResult run_rotation(std::span<const PatientRecord> dataset, const FoldPlan& plan, std::size_t rotation,
                            const CvOptions& options);

/// All rotations, merged in rotation order. A failing rotation is reported in its result and
/// does not stop the others.
std::vector<RotationResult> run_cross_validation(std::span<const PatientRecord> dataset, const FoldPlan& plan,
                                                 const CvOptions& options);

/// Rows of all successful rotations, in rotation order.
std::vector<MetricRow> merged_metrics(const std::vector<RotationResult>& results);

}  // namespace ptvseg
