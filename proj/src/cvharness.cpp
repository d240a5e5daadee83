#include "ptvseg/cvharness.hpp"

#include "ptvseg/checkpoint.hpp"

#include <algorithm>
#include <atomic>
#include <stdexcept>
#include <thread>

namespace ptvseg {

namespace fs = std::filesystem;

std::vector<std::string> FoldPlan::ids_in(std::span<const std::size_t> fold_indices) const
{
    std::vector<std::string> ids;
    for (std::size_t f : fold_indices)
        ids.insert(ids.end(), folds.at(f).begin(), folds.at(f).end());
    std::sort(ids.begin(), ids.end());
    return ids;
}

FoldPlan assign_folds(std::span<const PatientKey> patients, std::size_t k)
{
    if (k < 3)
        throw std::invalid_argument("assign_folds: k must be >= 3 (train, validation and test roles)");
    if (patients.size() < k)
        throw std::invalid_argument("assign_folds: " + std::to_string(patients.size()) + " patients cannot fill " +
                                    std::to_string(k) + " folds");
    std::vector<PatientKey> ordered(patients.begin(), patients.end());
    std::sort(ordered.begin(), ordered.end(), [](const PatientKey& a, const PatientKey& b) {
        return a.acquisition_date != b.acquisition_date ? a.acquisition_date < b.acquisition_date : a.id < b.id;
    });

    FoldPlan plan;
    plan.k = k;
    plan.folds.assign(k, {});
    for (std::size_t rank = 0; rank < ordered.size(); ++rank)
    {
        const std::size_t fold = rank % k;
        if (!plan.fold_of.emplace(ordered[rank].id, fold).second)
            throw std::invalid_argument("assign_folds: duplicate patient id '" + ordered[rank].id + "'");
        plan.folds[fold].push_back(ordered[rank].id);
    }
    for (std::size_t r = 0; r < k; ++r)
    {
        Rotation rot{r, r, (r + 1) % k, {}};
        for (std::size_t f = 0; f < k; ++f)
            if (f != rot.test_fold && f != rot.val_fold)
                rot.train_folds.push_back(f);
        plan.rotations.push_back(std::move(rot));
    }
    return plan;
}

FoldPlan assign_folds(std::span<const PatientRecord> patients, std::size_t k)
{
    std::vector<PatientKey> keys;
    for (const auto& p : patients)
        keys.push_back({p.id, p.acquisition_date});
    return assign_folds(std::span<const PatientKey>(keys), k);
}

std::vector<Sample> make_samples(std::span<const PatientRecord> patients, const UNetConfig& config)
{
    std::vector<Sample> samples;
    for (const auto& p : patients)
    {
        const std::size_t out_h = output_extent(config, p.rows);
        const std::size_t out_w = output_extent(config, p.cols);
        const std::size_t plane = p.rows * p.cols;
        for (std::size_t z = 0; z < p.slices.size(); ++z)
        {
            Tensor image = to_model_input(window_slice(p.slices[z]), p.rows, p.cols);
            Tensor mask({1, p.rows, p.cols});
            for (std::size_t i = 0; i < plane; ++i)
                mask[i] = p.mask.voxels[z * plane + i];
            samples.push_back(Sample{std::move(image), center_crop(mask, out_h, out_w)});
        }
    }
    return samples;
}

BinaryVolume predict_patient(const UNetModel& model, const PatientRecord& patient, double threshold)
{
    BinaryVolume out(patient.slices.size(), patient.rows, patient.cols, patient.spacing_mm);
    const std::size_t plane = patient.rows * patient.cols;
    for (std::size_t z = 0; z < patient.slices.size(); ++z)
    {
        const Tensor image = to_model_input(window_slice(patient.slices[z]), patient.rows, patient.cols);
        Tensor probabilities = sigmoid_forward(unet_infer_logits(model, image));
        if (probabilities.dim(1) != patient.rows || probabilities.dim(2) != patient.cols)
        {
            // Outside the valid-padding output the embedded zeros must stay background.
            Tensor full = center_embed(probabilities, patient.rows, patient.cols);
            Tensor inside = center_embed(Tensor(probabilities.shape(), 1.0), patient.rows, patient.cols);
            for (std::size_t i = 0; i < full.size(); ++i)
                if (inside[i] == 0.0)
                    full[i] = -1.0;
            probabilities = std::move(full);
        }
        const auto mask = binarize(std::span<const double>(probabilities.data(), plane), threshold);
        std::copy(mask.begin(), mask.end(), out.voxels.begin() + static_cast<std::ptrdiff_t>(z * plane));
    }
    return out;
}

std::vector<MetricRow> evaluate_patients(const UNetModel& model, std::span<const PatientRecord> patients,
                                         const FoldPlan* plan, LossKind loss, double threshold)
{
    std::vector<MetricRow> rows;
    for (const auto& p : patients)
    {
        const VolumeMetrics m = evaluate_volume(predict_patient(model, p, threshold), p.mask);
        MetricRow row{std::string(loss_name(loss)), p.id, 0, m.dsc, m.hd95_mm, m.hd_mm, {}};
        if (plan)
        {
            const auto it = plan->fold_of.find(p.id);
            if (it != plan->fold_of.end())
                row.fold = it->second;
        }
        if (!m.hd_mm)
            row.warnings = "hd_undefined_empty_surface";
        rows.push_back(std::move(row));
    }
    return rows;
}

namespace {

std::vector<PatientRecord> select(std::span<const PatientRecord> dataset, const std::vector<std::string>& ids)
{
    std::vector<PatientRecord> out;
    for (const auto& p : dataset)
        if (std::binary_search(ids.begin(), ids.end(), p.id))
            out.push_back(p);
    return out;
}

}  // namespace

RotationResult run_rotation(std::span<const PatientRecord> dataset, const FoldPlan& plan, std::size_t rotation,
                            const CvOptions& options)
{
    const Rotation& rot = plan.rotations.at(rotation);
    RotationResult result;
    result.rotation = rotation;

    const std::size_t test_fold[] = {rot.test_fold};
    const std::size_t val_fold[] = {rot.val_fold};
    const auto train_patients = select(dataset, plan.ids_in(rot.train_folds));
    const auto val_patients = select(dataset, plan.ids_in(val_fold));
    const auto test_patients = select(dataset, plan.ids_in(test_fold));

    TrainConfig train_config = options.train;
    train_config.seed = options.train.seed + rotation;
    const auto train_samples = make_samples(train_patients, options.unet);
    const auto val_samples = make_samples(val_patients, options.unet);

    std::optional<fs::path> dir;
    if (options.out_dir)
    {
        dir = *options.out_dir / ("rotation_" + std::to_string(rotation));
        fs::create_directories(*dir);
    }

    TrainState state = train(build_unet(options.unet, train_config.seed), train_samples, val_samples, train_config,
                             [&](const TrainState& s, const EpochRecord&) {
                                 if (dir && s.best_epoch == s.epoch)
                                     save_checkpoint(s.best_model, *dir / "checkpoint.bin");
                             });
    result.checkpoint = std::move(state.best_model);
    result.best_epoch = state.best_epoch;
    result.history = std::move(state.history);
    result.metrics = evaluate_patients(result.checkpoint, test_patients, &plan, train_config.loss, options.threshold);
    result.ok = true;

    if (dir)
    {
        write_epoch_log(result.history, *dir / "epochs.csv");
        write_metrics_csv(result.metrics, *dir / "metrics.csv");
    }
    return result;
}

std::vector<RotationResult> run_cross_validation(std::span<const PatientRecord> dataset, const FoldPlan& plan,
                                                 const CvOptions& options)
{
    options.unet.validate();
    options.train.validate();
    const std::size_t count = plan.rotations.size();
    std::vector<RotationResult> results(count);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t r = next++; r < count; r = next++)
        {
            try
            {
                results[r] = run_rotation(dataset, plan, r, options);
            }
            catch (const std::exception& e)
            {
                results[r] = RotationResult{};
                results[r].rotation = r;
                results[r].error = e.what();
            }
        }
    };

    const std::size_t jobs = std::clamp<std::size_t>(options.jobs, 1, count);
    if (jobs == 1)
    {
        worker();
    }
    else
    {
        std::vector<std::jthread> pool;
        for (std::size_t j = 0; j < jobs; ++j)
            pool.emplace_back(worker);
    }

    if (options.out_dir)
    {
        fs::create_directories(*options.out_dir);
        write_metrics_csv(merged_metrics(results), *options.out_dir / "metrics.csv");
    }
    return results;
}

std::vector<MetricRow> merged_metrics(const std::vector<RotationResult>& results)
{
    std::vector<MetricRow> rows;
    for (const auto& r : results)
        if (r.ok)
            rows.insert(rows.end(), r.metrics.begin(), r.metrics.end());
    return rows;
}

}  // namespace ptvseg
