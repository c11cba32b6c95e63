#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dosetime::data {

struct Measurement {
    double time = 0.0;
    double outcome = 0.0;
};

struct PatientRecord {
    int64_t id = 0;
    std::vector<double> covariates;
    double dose = 0.0;  // 0 means untreated; otherwise within [a_min, a_max]
    std::vector<Measurement> measurements;
    bool treated = false;  // dose > 0 at load time; survives normalization

    int n_measurements() const { return static_cast<int>(measurements.size()); }
};

// Affine maps for the treated dose range and the time range. Dose 0 is the
// categorical no-treatment level and is kept out of these maps: patient
// records carry a `treated` flag, and untreated doses stay 0 on both sides.
struct NormalizationParams {
    double a_min = 0.0, a_max = 1.0;
    double t_max = 1.0;

    double norm_dose(double a) const { return (a - a_min) / (a_max - a_min); }
    double denorm_dose(double a) const { return a_min + a * (a_max - a_min); }
    double norm_time(double t) const { return t / t_max; }
    double denorm_time(double t) const { return t * t_max; }
};

struct LongitudinalDataset {
    std::vector<PatientRecord> patients;
    std::vector<std::string> covariate_names;
    double a_min = 0.0, a_max = 1.0;  // treated dose range (dose 0 sits outside it)
    double t_max = 1.0;               // times live in [0, t_max]
    bool normalized = false;

    int n_patients() const { return static_cast<int>(patients.size()); }
    int covariate_dim() const { return static_cast<int>(covariate_names.size()); }
    int n_treated() const;
    int n_measurements() const;

    std::vector<int> treated_indices() const;
    std::vector<int> untreated_indices() const;
    const PatientRecord* find(int64_t id) const;
};

struct DatasetSplit {
    std::vector<int64_t> train_ids;       // sorted
    std::vector<int64_t> validation_ids;  // sorted
    double fraction = 0.7;

    bool in_train(int64_t id) const;
};

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Checks every record invariant (strictly increasing times, dose range,
// covariate dimension); throws DatasetError naming the offending patient.
void validate(const LongitudinalDataset& ds);

enum class FileFormat { Csv, Json };

// CSV layout: one row per measurement (id, dose, time, outcome, x_1..x_d)
// with a <stem>.meta.json sidecar for names and ranges. The JSON format
// stores the whole dataset in a single <stem>.json file.
void save_dataset(const LongitudinalDataset& ds, const std::string& stem, FileFormat format);
LongitudinalDataset load_dataset(const std::string& stem, FileFormat format);

// Maps treated doses [a_min,a_max] -> [0,1] and times [0,t_max] -> [0,1];
// dose 0 stays 0. Returns the affine parameters for later denormalization.
std::pair<LongitudinalDataset, NormalizationParams> normalize(const LongitudinalDataset& ds);

// Patient-level split, deterministic in (ids, fraction, seed).
DatasetSplit split(const LongitudinalDataset& ds, double fraction, uint64_t seed);
DatasetSplit split_ids(std::vector<int64_t> ids, double fraction, uint64_t seed);

}  // namespace dosetime::data
