#include "dosetime/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dosetime/rng.hpp"
#include "json.hpp"

namespace dosetime::data {

using nlohmann::json;

int LongitudinalDataset::n_treated() const {
    int n = 0;
    for (const auto& p : patients) n += p.treated ? 1 : 0;
    return n;
}

int LongitudinalDataset::n_measurements() const {
    int n = 0;
    for (const auto& p : patients) n += p.n_measurements();
    return n;
}

std::vector<int> LongitudinalDataset::treated_indices() const {
    std::vector<int> idx;
    for (int i = 0; i < n_patients(); ++i)
        if (patients[i].treated) idx.push_back(i);
    return idx;
}

std::vector<int> LongitudinalDataset::untreated_indices() const {
    std::vector<int> idx;
    for (int i = 0; i < n_patients(); ++i)
        if (!patients[i].treated) idx.push_back(i);
    return idx;
}

const PatientRecord* LongitudinalDataset::find(int64_t id) const {
    for (const auto& p : patients)
        if (p.id == id) return &p;
    return nullptr;
}

bool DatasetSplit::in_train(int64_t id) const {
    return std::binary_search(train_ids.begin(), train_ids.end(), id);
}

void validate(const LongitudinalDataset& ds) {
    if (ds.patients.empty()) throw DatasetError("no patients");
    const size_t d = ds.covariate_names.size();
    for (const auto& p : ds.patients) {
        const std::string who = "patient " + std::to_string(p.id);
        if (p.covariates.size() != d)
            throw DatasetError(who + ": covariate dimension " + std::to_string(p.covariates.size()) +
                               " does not match dataset dimension " + std::to_string(d));
        if (p.measurements.empty()) throw DatasetError(who + ": no measurements");
        double prev = -std::numeric_limits<double>::infinity();
        for (const auto& m : p.measurements) {
            if (!(m.time > prev))
                throw DatasetError(who + ": measurement times not strictly increasing");
            prev = m.time;
            if (m.time < 0.0) throw DatasetError(who + ": negative measurement time");
            if (!std::isfinite(m.outcome)) throw DatasetError(who + ": non-finite outcome");
        }
        if (p.dose < 0.0) throw DatasetError(who + ": negative dose");
        const double lo = ds.normalized ? 0.0 : ds.a_min;
        const double hi = ds.normalized ? 1.0 : ds.a_max;
        if (p.dose != 0.0 && (p.dose < lo - 1e-12 || p.dose > hi + 1e-12))
            throw DatasetError(who + ": dose " + std::to_string(p.dose) + " outside [" +
                               std::to_string(lo) + ", " + std::to_string(hi) + "]");
        const double tmax = ds.normalized ? 1.0 : ds.t_max;
        if (p.measurements.back().time > tmax + 1e-12)
            throw DatasetError(who + ": measurement time beyond t_max");
    }
}

static std::string fmt_full(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return std::string(buf);
}

static json meta_to_json(const LongitudinalDataset& ds) {
    return json{{"covariate_names", ds.covariate_names},
                {"a_min", ds.a_min},
                {"a_max", ds.a_max},
                {"t_max", ds.t_max},
                {"normalized", ds.normalized}};
}

static void meta_from_json(const json& j, LongitudinalDataset& ds) {
    ds.covariate_names = j.at("covariate_names").get<std::vector<std::string>>();
    ds.a_min = j.at("a_min").get<double>();
    ds.a_max = j.at("a_max").get<double>();
    ds.t_max = j.at("t_max").get<double>();
    ds.normalized = j.at("normalized").get<bool>();
}

static void save_csv(const LongitudinalDataset& ds, const std::string& stem) {
    std::ofstream out(stem + ".csv");
    if (!out) throw DatasetError("cannot write " + stem + ".csv");
    out << "id,dose,time,outcome";
    for (size_t k = 0; k < ds.covariate_names.size(); ++k) out << ",x_" << (k + 1);
    out << "\n";
    for (const auto& p : ds.patients) {
        for (const auto& m : p.measurements) {
            out << p.id << ',' << fmt_full(p.dose) << ',' << fmt_full(m.time) << ','
                << fmt_full(m.outcome);
            for (double x : p.covariates) out << ',' << fmt_full(x);
            out << "\n";
        }
    }
    std::ofstream meta(stem + ".meta.json");
    meta << meta_to_json(ds).dump(2) << "\n";
}

static LongitudinalDataset load_csv(const std::string& stem) {
    LongitudinalDataset ds;
    {
        std::ifstream meta(stem + ".meta.json");
        if (!meta) throw DatasetError("missing sidecar " + stem + ".meta.json");
        json j;
        meta >> j;
        meta_from_json(j, ds);
    }
    std::ifstream in(stem + ".csv");
    if (!in) throw DatasetError("cannot open " + stem + ".csv");
    std::string line;
    if (!std::getline(in, line)) throw DatasetError(stem + ".csv: empty file");
    const size_t d = ds.covariate_names.size();
    size_t row = 1;
    PatientRecord* cur = nullptr;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::vector<double> fields;
        fields.reserve(4 + d);
        size_t pos = 0, col = 0;
        while (pos <= line.size()) {
            size_t comma = line.find(',', pos);
            if (comma == std::string::npos) comma = line.size();
            ++col;
            try {
                fields.push_back(std::stod(line.substr(pos, comma - pos)));
            } catch (const std::exception&) {
                throw DatasetError(stem + ".csv: parse error at row " + std::to_string(row) +
                                   ", column " + std::to_string(col));
            }
            pos = comma + 1;
        }
        if (fields.size() != 4 + d)
            throw DatasetError(stem + ".csv: row " + std::to_string(row) + " has " +
                               std::to_string(fields.size()) + " fields, expected " +
                               std::to_string(4 + d));
        const int64_t id = static_cast<int64_t>(fields[0]);
        if (cur == nullptr || cur->id != id) {
            ds.patients.emplace_back();
            cur = &ds.patients.back();
            cur->id = id;
            cur->dose = fields[1];
            cur->treated = cur->dose > 0.0;
            cur->covariates.assign(fields.begin() + 4, fields.end());
        }
        cur->measurements.push_back({fields[2], fields[3]});
    }
    validate(ds);
    return ds;
}

static json dataset_to_json(const LongitudinalDataset& ds) {
    json patients = json::array();
    for (const auto& p : ds.patients) {
        std::vector<double> times, outcomes;
        for (const auto& m : p.measurements) {
            times.push_back(m.time);
            outcomes.push_back(m.outcome);
        }
        patients.push_back(json{{"id", p.id},
                                {"dose", p.dose},
                                {"covariates", p.covariates},
                                {"times", times},
                                {"outcomes", outcomes}});
    }
    return json{{"meta", meta_to_json(ds)}, {"patients", patients}};
}

static LongitudinalDataset dataset_from_json(const json& j) {
    LongitudinalDataset ds;
    meta_from_json(j.at("meta"), ds);
    for (const auto& pj : j.at("patients")) {
        PatientRecord p;
        p.id = pj.at("id").get<int64_t>();
        p.dose = pj.at("dose").get<double>();
        p.treated = p.dose > 0.0;
        p.covariates = pj.at("covariates").get<std::vector<double>>();
        auto times = pj.at("times").get<std::vector<double>>();
        auto outcomes = pj.at("outcomes").get<std::vector<double>>();
        if (times.size() != outcomes.size())
            throw DatasetError("patient " + std::to_string(p.id) + ": times/outcomes length mismatch");
        for (size_t k = 0; k < times.size(); ++k) p.measurements.push_back({times[k], outcomes[k]});
        ds.patients.push_back(std::move(p));
    }
    validate(ds);
    return ds;
}

void save_dataset(const LongitudinalDataset& ds, const std::string& stem, FileFormat format) {
    if (format == FileFormat::Csv) {
        save_csv(ds, stem);
    } else {
        std::ofstream out(stem + ".json");
        if (!out) throw DatasetError("cannot write " + stem + ".json");
        out << dataset_to_json(ds).dump(2) << "\n";
    }
}

LongitudinalDataset load_dataset(const std::string& stem, FileFormat format) {
    if (format == FileFormat::Csv) return load_csv(stem);
    std::ifstream in(stem + ".json");
    if (!in) throw DatasetError("cannot open " + stem + ".json");
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw DatasetError(stem + ".json: parse error: " + std::string(e.what()));
    }
    return dataset_from_json(j);
}

std::pair<LongitudinalDataset, NormalizationParams> normalize(const LongitudinalDataset& ds) {
    if (ds.normalized) throw DatasetError("dataset already normalized");
    if (!(ds.a_max > ds.a_min)) throw DatasetError("degenerate dose range");
    if (!(ds.t_max > 0.0)) throw DatasetError("degenerate time range");
    NormalizationParams np{ds.a_min, ds.a_max, ds.t_max};
    LongitudinalDataset out = ds;
    out.normalized = true;
    out.a_min = 0.0;
    out.a_max = 1.0;
    out.t_max = 1.0;
    for (auto& p : out.patients) {
        p.dose = p.treated ? np.norm_dose(p.dose) : 0.0;
        for (auto& m : p.measurements) m.time = np.norm_time(m.time);
    }
    return {std::move(out), np};
}

DatasetSplit split_ids(std::vector<int64_t> ids, double fraction, uint64_t seed) {
    if (ids.size() < 2) throw DatasetError("split needs at least 2 patients");
    if (!(fraction > 0.0 && fraction < 1.0)) throw DatasetError("split fraction must be in (0,1)");
    std::sort(ids.begin(), ids.end());
    Rng rng(derive_seed(seed, "split"));
    rng.shuffle(ids);
    auto n_train = static_cast<size_t>(std::llround(fraction * static_cast<double>(ids.size())));
    n_train = std::clamp<size_t>(n_train, 1, ids.size() - 1);
    DatasetSplit s;
    s.fraction = fraction;
    s.train_ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.validation_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
    std::sort(s.train_ids.begin(), s.train_ids.end());
    std::sort(s.validation_ids.begin(), s.validation_ids.end());
    return s;
}

DatasetSplit split(const LongitudinalDataset& ds, double fraction, uint64_t seed) {
    std::vector<int64_t> ids;
    ids.reserve(ds.patients.size());
    for (const auto& p : ds.patients) ids.push_back(p.id);
    return split_ids(std::move(ids), fraction, seed);
}

}  // namespace dosetime::data
