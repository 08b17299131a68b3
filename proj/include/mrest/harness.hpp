#pragma once

#include "mrest/csv.hpp"
#include "mrest/design.hpp"
#include "mrest/estimators.hpp"
#include "mrest/metrics.hpp"
#include "mrest/simulation.hpp"
#include "mrest/types.hpp"

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <thread>
#include <vector>

namespace mrest {

inline constexpr int kSeedSentinel = 0;  ///< method slot for per-design shared streams

/// Stable hash-mix of the task identity; injective over the study's index
/// ranges (checked by test). Population streams use the sentinel method with
/// replicate 0; shared datasets use the sentinel with replicate >= 1.
inline std::uint64_t derive_seed(std::uint64_t base_seed, int design_id, int method_ordinal,
                                 int replicate) {
    require(design_id >= 1 && method_ordinal >= 0 && replicate >= 0, "invalid seed identifiers");
    return mix_seed(base_seed, {0x6d7265737453454dULL, static_cast<std::uint64_t>(design_id),
                                static_cast<std::uint64_t>(method_ordinal),
                                static_cast<std::uint64_t>(replicate)});
}

inline std::uint64_t derive_seed(std::uint64_t base_seed, int design_id, Method method,
                                 int replicate) {
    return derive_seed(base_seed, design_id, method_ordinal(method), replicate);
}

struct RunConfig {
    std::vector<int> designs;      ///< empty = all 32 grid designs
    int replicates = 50;
    std::vector<Method> methods;   ///< empty = the five study methods
    int lmax = 10;
    int senv_response_dim = 2;
    std::uint64_t base_seed = kDefaultBaseSeed;
    bool share_datasets_across_methods = false;
    int parallel_width = 0;        ///< 0 = hardware concurrency
    std::string output_dir = "mrest-out";
    double prereduce_cap = 0.995;
    bool export_coefficients = false;  ///< also write per-task coefficient CSVs
    EnvelopeOptions envelope;

    std::vector<Method> effective_methods() const {
        if (!methods.empty()) return methods;
        return {kStudyMethods, kStudyMethods + 5};
    }

    /// Canonical echo of everything that determines the outputs; excludes
    /// parallel_width and output_dir, which must not change results.
    std::string canonical() const {
        std::ostringstream out;
        out << "base_seed = " << base_seed << "\n";
        out << "designs =";
        for (int d : designs) out << " " << d;
        out << "\nmethods =";
        for (Method m : effective_methods()) out << " " << method_name(m);
        out << "\nreplicates = " << replicates << "\n";
        out << "lmax = " << lmax << "\n";
        out << "senv_response_dim = " << senv_response_dim << "\n";
        out << "share_datasets = " << (share_datasets_across_methods ? 1 : 0) << "\n";
        out << "prereduce_cap = " << format_double(prereduce_cap) << "\n";
        return out.str();
    }
};

struct StudyTask {
    int design_id = 0;
    Method method = Method::Pcr;
    int replicate = 0;
    std::uint64_t seed = 0;
};

struct StudyResult {
    std::vector<SimDesign> designs;
    std::map<int, PopulationModel> populations;
    std::vector<ErrorRecord> records;
    AssembledDataset u;
    AssembledDataset v;
    std::vector<StudyTask> tasks;
    int resumed_tasks = 0;
};

inline void export_population(const PopulationModel& pop, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "# mrest population v1\n";
    write_matrix_block(out, "lambda", pop.lambda);
    write_matrix_block(out, "kappa", pop.kappa);
    write_matrix_block(out, "sigma_zw", pop.sigma_zw);
    write_matrix_block(out, "rot_x", pop.rot_x);
    write_matrix_block(out, "rot_y", pop.rot_y);
    write_matrix_block(out, "sigma_xx", pop.sigma_xx);
    write_matrix_block(out, "sigma_xy", pop.sigma_xy);
    write_matrix_block(out, "sigma_yy", pop.sigma_yy);
    write_matrix_block(out, "beta_true", pop.beta_true);
    write_matrix_block(out, "sigma2_y", pop.sigma2_y);
    write_matrix_block(out, "sigma2_eps", pop.sigma2_eps);
}

/// One row per (l, response, predictor) coefficient of a fitted path.
inline void export_coefficient_path_csv(const CoefficientPath& path, int design_id,
                                        int replicate, const std::string& file) {
    CsvWriter csv(file, "coefficients v1",
                  {"design_id", "method", "replicate", "l", "response", "predictor",
                   "coefficient"});
    const std::string design = std::to_string(design_id);
    const std::string method = std::string(method_name(path.method));
    const std::string rep = std::to_string(replicate);
    for (int l = 0; l <= path.lmax; ++l) {
        const Matrix& beta = path.coef[l];
        for (Index j = 0; j < beta.cols(); ++j)
            for (Index i = 0; i < beta.rows(); ++i)
                csv.row({design, method, rep, std::to_string(l), std::to_string(j + 1),
                         std::to_string(i + 1), format_double(beta(i, j))});
    }
}

inline void export_dataset_csv(const SimDataset& data, const std::string& path) {
    const Index m = data.y.cols();
    const Index p = data.x.cols();
    std::vector<std::string> header;
    for (Index j = 0; j < m; ++j) header.push_back("y" + std::to_string(j + 1));
    for (Index i = 0; i < p; ++i) header.push_back("x" + std::to_string(i + 1));
    CsvWriter csv(path, "dataset v1", header);
    std::vector<std::string> row(m + p);
    for (Index r = 0; r < data.y.rows(); ++r) {
        for (Index j = 0; j < m; ++j) row[j] = format_double(data.y(r, j));
        for (Index i = 0; i < p; ++i) row[m + i] = format_double(data.x(r, i));
        csv.row(row);
    }
}

namespace detail {

inline std::string task_stem(const StudyTask& task) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "d%03d_%s_r%04d", task.design_id,
                  std::string(method_name(task.method)).c_str(), task.replicate);
    return buf;
}

inline std::string record_row(const ErrorRecord& r) {
    std::ostringstream out;
    out << r.design_id << "," << method_name(r.method) << "," << r.replicate << "," << r.response
        << "," << r.l << "," << format_double(r.est_error) << "," << format_double(r.pred_error);
    return out.str();
}

inline ErrorRecord parse_record_row(const std::vector<std::string>& fields) {
    require(fields.size() == 7, "bad record row");
    ErrorRecord r;
    r.design_id = std::stoi(fields[0]);
    r.method = parse_method(fields[1]);
    r.replicate = std::stoi(fields[2]);
    r.response = std::stoi(fields[3]);
    r.l = std::stoi(fields[4]);
    r.est_error = parse_double(fields[5]);
    r.pred_error = parse_double(fields[6]);
    return r;
}

inline const std::vector<std::string>& record_header() {
    static const std::vector<std::string> header = {
        "design_id", "method", "replicate", "response", "l", "est_error", "pred_error"};
    return header;
}

/// Runs one (design, method, replicate) work unit and renders its record
/// rows. Row strings are produced here once so that task files and the
/// merged records file are byte-identical however the run is scheduled.
inline std::vector<std::string> run_task(const StudyTask& task, const SimDesign& design,
                                         const PopulationModel& pop, const RunConfig& config,
                                         const std::string& coef_file) {
    Rng rng(task.seed);
    SimDataset data = sample_dataset(pop, design.n, rng);
    data.design_id = design.design_id;
    data.method = task.method;
    data.replicate = task.replicate;
    data.seed = task.seed;

    CoefficientPath path = fit_method(task.method, data, config.lmax, config.senv_response_dim,
                                      config.envelope, config.prereduce_cap);
    if (!coef_file.empty())
        export_coefficient_path_csv(path, design.design_id, task.replicate, coef_file);

    std::vector<std::string> rows;
    rows.reserve(design.m * (config.lmax + 1));
    for (int j = 1; j <= design.m; ++j) {
        for (int l = 0; l <= config.lmax; ++l) {
            ErrorRecord rec;
            rec.design_id = design.design_id;
            rec.method = task.method;
            rec.replicate = task.replicate;
            rec.response = j;
            rec.l = l;
            if (path.failed[l]) {
                rec.est_error = std::numeric_limits<double>::infinity();
                rec.pred_error = std::numeric_limits<double>::infinity();
            } else {
                rec.est_error = estimation_error(pop.beta_true.col(j - 1), path.coef[l].col(j - 1),
                                                 pop.sigma2_y[j - 1]);
                rec.pred_error = prediction_error(pop.beta_true.col(j - 1),
                                                  path.coef[l].col(j - 1), pop.sigma_xx,
                                                  pop.sigma2_eps[j - 1]);
            }
            rows.push_back(record_row(rec));
        }
    }
    return rows;
}

inline bool read_task_file(const std::string& path, std::size_t expected_rows,
                           std::vector<std::string>& rows) {
    std::ifstream in(path);
    if (!in) return false;
    std::vector<std::string> lines;
    std::string line;
    bool complete = false;
    while (std::getline(in, line)) {
        if (line == "# end") {
            complete = true;
            break;
        }
        if (!line.empty()) lines.push_back(line);
    }
    if (!complete || lines.size() != expected_rows) return false;
    rows = std::move(lines);
    return true;
}

inline std::string iso_now() {
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return buf;
}

}  // namespace detail

/// Runs the configured slice of the study: one population per design, one
/// dataset + coefficient path + error evaluation per (design, method,
/// replicate); assembles and persists the error and component datasets.
/// Completed per-task files in the output directory are reused, so a partial
/// run resumes where it stopped and produces identical files.
inline StudyResult run_study(const RunConfig& config) {
    namespace fs = std::filesystem;
    require(config.replicates >= 1, "replicates must be >= 1");
    require(config.lmax >= 1, "lmax must be >= 1");

    const std::vector<SimDesign> grid = design_grid(config.base_seed);
    std::vector<int> design_ids = config.designs;
    if (design_ids.empty())
        for (const auto& d : grid) design_ids.push_back(d.design_id);
    std::sort(design_ids.begin(), design_ids.end());
    design_ids.erase(std::unique(design_ids.begin(), design_ids.end()), design_ids.end());

    StudyResult result;
    for (int id : design_ids) {
        require(id >= 1 && id <= static_cast<int>(grid.size()),
                "design " + std::to_string(id) + " does not exist");
        result.designs.push_back(grid[id - 1]);
    }
    const std::vector<Method> methods = config.effective_methods();
    require(!methods.empty(), "no methods requested");

    const fs::path out_dir(config.output_dir);
    const fs::path tasks_dir = out_dir / "tasks";
    fs::create_directories(tasks_dir);
    const fs::path coef_dir = out_dir / "coefficients";
    if (config.export_coefficients) fs::create_directories(coef_dir);

    // Guard resumes against configuration drift.
    const fs::path manifest_path = out_dir / "manifest.txt";
    const std::string canonical = config.canonical();
    bool resuming = false;
    if (fs::exists(manifest_path)) {
        std::ifstream in(manifest_path);
        std::ostringstream existing;
        std::string line;
        bool in_config = false;
        while (std::getline(in, line)) {
            if (line == "# config") {
                in_config = true;
                continue;
            }
            if (line == "# tasks") break;
            if (in_config) existing << line << "\n";
        }
        require(existing.str() == canonical,
                "output directory holds a different run configuration: " + config.output_dir);
        resuming = true;
    }

    // Populations: one per design, shared by every method and replicate.
    for (const auto& design : result.designs) {
        Rng rng(derive_seed(config.base_seed, design.design_id, kSeedSentinel, 0));
        result.populations.emplace(design.design_id, assemble_population(design, rng));
    }

    for (const auto& design : result.designs)
        for (Method method : methods)
            for (int rep = 1; rep <= config.replicates; ++rep) {
                StudyTask task;
                task.design_id = design.design_id;
                task.method = method;
                task.replicate = rep;
                const int slot = config.share_datasets_across_methods ? kSeedSentinel
                                                                      : method_ordinal(method);
                task.seed = derive_seed(config.base_seed, design.design_id, slot, rep);
                result.tasks.push_back(task);
            }

    auto write_manifest = [&](const std::vector<std::string>& status, bool complete) {
        std::ofstream out(manifest_path, std::ios::trunc);
        out << "# mrest manifest v1\n";
        out << "status = " << (complete ? "complete" : "partial") << "\n";
        out << "written = " << detail::iso_now() << "\n";
        out << "# config\n" << canonical;
        out << "# tasks\n";
        out << "# design method replicate seed status\n";
        for (std::size_t i = 0; i < result.tasks.size(); ++i) {
            const auto& t = result.tasks[i];
            out << t.design_id << " " << method_name(t.method) << " " << t.replicate << " "
                << t.seed << " " << status[i] << "\n";
        }
    };

    std::vector<std::string> status(result.tasks.size(), "pending");
    if (!resuming) write_manifest(status, false);

    const std::size_t rows_per_task =
        static_cast<std::size_t>(result.designs.front().m) * (config.lmax + 1);
    std::vector<std::vector<std::string>> task_rows(result.tasks.size());
    std::vector<std::string> task_error(result.tasks.size());

    std::map<int, const SimDesign*> design_by_id;
    for (const auto& d : result.designs) design_by_id[d.design_id] = &d;

    int width = config.parallel_width;
    if (width <= 0) width = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

    std::atomic<std::size_t> cursor{0};
    std::atomic<int> resumed{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t i = cursor.fetch_add(1);
            if (i >= result.tasks.size()) break;
            const StudyTask& task = result.tasks[i];
            const fs::path task_path = tasks_dir / (detail::task_stem(task) + ".csv");
            const std::string coef_file =
                config.export_coefficients
                    ? (coef_dir / (detail::task_stem(task) + ".csv")).string()
                    : std::string();
            try {
                if ((coef_file.empty() || fs::exists(coef_file)) &&
                    detail::read_task_file(task_path.string(), rows_per_task, task_rows[i])) {
                    resumed.fetch_add(1);
                    continue;
                }
                const SimDesign& design = *design_by_id.at(task.design_id);
                task_rows[i] = detail::run_task(task, design,
                                                result.populations.at(task.design_id), config,
                                                coef_file);
                const fs::path tmp = task_path.string() + ".tmp";
                {
                    std::ofstream out(tmp, std::ios::trunc);
                    for (const auto& row : task_rows[i]) out << row << "\n";
                    out << "# end\n";
                }
                fs::rename(tmp, task_path);
            } catch (const std::exception& err) {
                task_error[i] = err.what();
            }
        }
    };
    std::vector<std::thread> threads;
    for (int w = 0; w < width; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    result.resumed_tasks = resumed.load();

    int failed = 0;
    for (std::size_t i = 0; i < result.tasks.size(); ++i) {
        if (!task_error[i].empty()) {
            status[i] = "failed: " + task_error[i];
            ++failed;
        } else {
            status[i] = "done";
        }
    }
    write_manifest(status, failed == 0);
    if (failed > 0)
        throw std::runtime_error(std::to_string(failed) + " of " +
                                 std::to_string(result.tasks.size()) +
                                 " tasks failed; see " + manifest_path.string());

    // Merge in canonical task order (the construction order above).
    {
        CsvWriter records(out_dir / "records.csv", "records v1", detail::record_header());
        for (std::size_t i = 0; i < result.tasks.size(); ++i)
            for (const auto& row : task_rows[i]) records.raw(row + "\n");
    }
    for (std::size_t i = 0; i < result.tasks.size(); ++i)
        for (const auto& row : task_rows[i])
            result.records.push_back(detail::parse_record_row(split_csv_line(row)));

    result.u = assemble_error_dataset(result.records);
    result.v = assemble_component_dataset(result.records);

    const int m = result.designs.front().m;
    auto write_wide = [&](const AssembledDataset& ds, const std::string& name,
                          const std::string& prefix, bool integral) {
        std::vector<std::string> header = {"design_id", "method", "replicate"};
        for (int j = 1; j <= m; ++j) header.push_back(prefix + std::to_string(j));
        CsvWriter csv(out_dir / (name + ".csv"), name + " v1", header);
        for (std::size_t r = 0; r < ds.keys.size(); ++r) {
            std::vector<std::string> row = {std::to_string(ds.keys[r].design_id),
                                            std::string(method_name(ds.keys[r].method)),
                                            std::to_string(ds.keys[r].replicate)};
            for (int j = 0; j < m; ++j)
                row.push_back(integral ? std::to_string(static_cast<long>(ds.values(r, j)))
                                       : format_double(ds.values(r, j)));
            csv.row(row);
        }
    };
    write_wide(result.u, "u", "u", false);
    write_wide(result.v, "v", "v", true);

    {
        CsvWriter key(out_dir / "design_key.csv", "design_key v1",
                      {"design_id", "p", "gamma", "eta", "relpos"});
        for (const auto& d : result.designs)
            key.row({std::to_string(d.design_id), std::to_string(d.p), format_double(d.gamma),
                     format_double(d.eta), format_relpos(d.relpos)});
    }
    return result;
}

/// Loaders for the persisted outputs, used by the analyze/report commands.
inline std::vector<ErrorRecord> load_records(const std::string& path) {
    const CsvTable table = read_csv(path);
    std::vector<ErrorRecord> records;
    records.reserve(table.rows.size());
    for (const auto& row : table.rows) records.push_back(detail::parse_record_row(row));
    return records;
}

inline AssembledDataset load_wide(const std::string& path, const std::string& prefix) {
    const CsvTable table = read_csv(path);
    AssembledDataset ds;
    int m = 0;
    while (true) {
        bool found = false;
        for (const auto& name : table.header)
            if (name == prefix + std::to_string(m + 1)) found = true;
        if (!found) break;
        ++m;
    }
    require(m > 0, "no value columns in " + path);
    const int c_design = table.column("design_id");
    const int c_method = table.column("method");
    const int c_rep = table.column("replicate");
    ds.values.resize(table.rows.size(), m);
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        ds.keys.push_back({std::stoi(row[c_design]), parse_method(row[c_method]),
                           std::stoi(row[c_rep])});
        for (int j = 0; j < m; ++j)
            ds.values(r, j) = parse_double(row[table.column(prefix + std::to_string(j + 1))]);
    }
    return ds;
}

inline std::vector<SimDesign> load_design_key(const std::string& path) {
    const CsvTable table = read_csv(path);
    const int c_id = table.column("design_id");
    const int c_p = table.column("p");
    const int c_gamma = table.column("gamma");
    const int c_eta = table.column("eta");
    const int c_relpos = table.column("relpos");
    std::vector<SimDesign> designs;
    for (const auto& row : table.rows) {
        SimDesign d;
        d.design_id = std::stoi(row[c_id]);
        d.p = std::stoi(row[c_p]);
        d.n = 100;
        d.m = 4;
        d.gamma = parse_double(row[c_gamma]);
        d.eta = parse_double(row[c_eta]);
        d.relpos = parse_relpos(row[c_relpos]);
        d.r2 = 0.8;
        designs.push_back(std::move(d));
    }
    return designs;
}

}  // namespace mrest
