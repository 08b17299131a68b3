// mrest: simulate multi-response linear-model data with controlled relevant
// subspaces, fit PCR / PLS1 / PLS2 / Xenv / Senv coefficient paths, and
// analyze estimation performance across the factorial design grid.

#include "mrest/analysis.hpp"
#include "mrest/harness.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace {

using namespace mrest;
namespace fs = std::filesystem;

std::vector<int> resolve_designs(const std::string& spec, std::uint64_t base_seed) {
    const std::vector<SimDesign> grid = design_grid(base_seed);
    std::vector<int> ids;
    std::string token;
    std::istringstream in(spec);
    while (std::getline(in, token, ',')) {
        if (token.empty()) continue;
        if (token == "all") {
            for (const auto& d : grid) ids.push_back(d.design_id);
        } else if (token == "9-like") {
            const auto match = match_designs(grid, 20, 0.9, 0.0, {5, 6, 7, 8});
            ids.insert(ids.end(), match.begin(), match.end());
        } else if (token == "29-like") {
            const auto match = match_designs(grid, 20, 0.9, 1.2, {5, 6, 7, 8});
            ids.insert(ids.end(), match.begin(), match.end());
        } else if (const auto dash = token.find('-'); dash != std::string::npos) {
            const int lo = std::stoi(token.substr(0, dash));
            const int hi = std::stoi(token.substr(dash + 1));
            require(lo >= 1 && hi >= lo, "bad design range: " + token);
            for (int i = lo; i <= hi; ++i) ids.push_back(i);
        } else {
            ids.push_back(std::stoi(token));
        }
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    for (int id : ids)
        require(id >= 1 && id <= static_cast<int>(grid.size()),
                "design " + std::to_string(id) + " does not exist");
    return ids;
}

std::vector<Method> resolve_methods(const std::string& spec) {
    std::vector<Method> methods;
    std::string token;
    std::istringstream in(spec);
    while (std::getline(in, token, ',')) {
        if (token.empty()) continue;
        if (token == "all") {
            methods.assign(kStudyMethods, kStudyMethods + 5);
        } else {
            methods.push_back(parse_method(token));
        }
    }
    require(!methods.empty(), "no methods requested");
    return methods;
}

int cmd_grid(std::uint64_t base_seed) {
    std::cout << "design_id,p,gamma,eta,relpos,n,m,r2\n";
    for (const auto& d : design_grid(base_seed))
        std::cout << d.design_id << "," << d.p << "," << format_double(d.gamma) << ","
                  << format_double(d.eta) << "," << format_relpos(d.relpos) << "," << d.n << ","
                  << d.m << "," << format_double(d.r2) << "\n";
    return 0;
}

int cmd_simulate(const RunConfig& config) {
    const std::vector<SimDesign> grid = design_grid(config.base_seed);
    std::vector<int> ids = config.designs;
    if (ids.empty())
        for (const auto& d : grid) ids.push_back(d.design_id);

    const fs::path out_dir(config.output_dir);
    fs::create_directories(out_dir / "populations");
    fs::create_directories(out_dir / "datasets");

    for (int id : ids) {
        const SimDesign& design = grid[id - 1];
        Rng pop_rng(derive_seed(config.base_seed, id, kSeedSentinel, 0));
        const PopulationModel pop = assemble_population(design, pop_rng);
        char name[64];
        std::snprintf(name, sizeof name, "design_%02d.txt", id);
        export_population(pop, (out_dir / "populations" / name).string());

        for (Method method : config.effective_methods())
            for (int rep = 1; rep <= config.replicates; ++rep) {
                const int slot = config.share_datasets_across_methods ? kSeedSentinel
                                                                      : method_ordinal(method);
                StudyTask task{id, method, rep,
                               derive_seed(config.base_seed, id, slot, rep)};
                Rng rng(task.seed);
                SimDataset data = sample_dataset(pop, design.n, rng);
                data.design_id = id;
                data.method = method;
                data.replicate = rep;
                data.seed = task.seed;
                export_dataset_csv(data,
                                   (out_dir / "datasets" / (detail::task_stem(task) + ".csv"))
                                       .string());
            }
    }
    std::cout << "simulated " << ids.size() << " designs into " << config.output_dir << "\n";
    return 0;
}

int cmd_run(const RunConfig& config) {
    const StudyResult result = run_study(config);
    std::cout << "completed " << result.tasks.size() << " tasks ("
              << result.resumed_tasks << " resumed); " << result.u.keys.size()
              << " rows in u and v; outputs in " << config.output_dir << "\n";
    return 0;
}

void write_manova_csv(const std::vector<ManovaTermResult>& terms, const std::string& path) {
    CsvWriter csv(path, "manova v1", {"term", "pillai", "approx_f", "df1", "df2", "p_value"});
    for (const auto& t : terms)
        csv.row({t.term, format_double(t.pillai), format_double(t.approx_f),
                 format_double(t.df1), format_double(t.df2), format_double(t.p_value)});
}

void write_scores_csv(const AssembledDataset& ds, const FactorFrame& frame,
                      const PcaSummary& pca, const std::string& path) {
    const Index m = pca.scores.cols();
    std::vector<std::string> header = {"design_id", "method", "replicate",
                                       "p", "gamma", "eta", "relpos"};
    for (Index k = 0; k < m; ++k) header.push_back("score" + std::to_string(k + 1));
    CsvWriter csv(path, "pca_scores v1", header);
    for (std::size_t r = 0; r < ds.keys.size(); ++r) {
        std::vector<std::string> row = {std::to_string(ds.keys[r].design_id),
                                        std::string(method_name(ds.keys[r].method)),
                                        std::to_string(ds.keys[r].replicate)};
        for (int f = 0; f < 4; ++f) row.push_back(frame.level_names[f][frame.codes[f][r]]);
        for (Index k = 0; k < m; ++k) row.push_back(format_double(pca.scores(r, k)));
        csv.row(row);
    }
}

void write_effects_csv(const EffectTable& table, Index m, const std::string& path) {
    std::vector<std::string> header = table.factors;
    header.push_back("count");
    header.push_back("score1_mean");
    header.push_back("score1_se");
    for (Index j = 1; j <= m; ++j) {
        header.push_back("col" + std::to_string(j) + "_mean");
        header.push_back("col" + std::to_string(j) + "_se");
    }
    CsvWriter csv(path, "effects v1", header);
    for (const auto& cell : table.cells) {
        std::vector<std::string> row = cell.levels;
        row.push_back(std::to_string(cell.count));
        row.push_back(format_double(cell.score_mean));
        row.push_back(format_double(cell.score_se));
        for (Index j = 0; j < m; ++j) {
            row.push_back(cell.count > 0 ? format_double(cell.mean[j]) : "nan");
            row.push_back(cell.count > 1 ? format_double(cell.std_error[j]) : "nan");
        }
        csv.row(row);
    }
}

std::vector<int> factor_indices(const FactorFrame& frame, const std::string& term) {
    std::vector<int> idx;
    std::string token;
    std::istringstream in(term);
    while (std::getline(in, token, ':')) {
        bool found = false;
        for (std::size_t f = 0; f < frame.factor_names.size(); ++f)
            if (frame.factor_names[f] == token) {
                idx.push_back(static_cast<int>(f));
                found = true;
            }
        require(found, "unknown factor in term: " + token);
    }
    return idx;
}

int cmd_analyze(const std::string& dir, const std::vector<std::string>& effect_terms) {
    const fs::path out_dir(dir);
    if (!fs::exists(out_dir / "u.csv") || !fs::exists(out_dir / "v.csv") ||
        !fs::exists(out_dir / "design_key.csv"))
        throw std::runtime_error("no results found in " + dir + " (run `mrest run` first)");

    const AssembledDataset u = load_wide((out_dir / "u.csv").string(), "u");
    const AssembledDataset v = load_wide((out_dir / "v.csv").string(), "v");
    const std::vector<SimDesign> designs = load_design_key((out_dir / "design_key.csv").string());

    const FactorFrame frame = factor_frame(u.keys, designs);
    const ModelMatrix mm = build_model_matrix(frame, 3);

    write_manova_csv(manova_pillai(u.values, mm), (out_dir / "manova_error.csv").string());
    write_manova_csv(manova_pillai(v.values, mm), (out_dir / "manova_component.csv").string());

    const PcaSummary pca_u = pca_scores(u.values);
    const PcaSummary pca_v = pca_scores(v.values);
    write_scores_csv(u, frame, pca_u, (out_dir / "pca_scores_error.csv").string());
    write_scores_csv(v, frame, pca_v, (out_dir / "pca_scores_component.csv").string());

    std::vector<std::string> terms = effect_terms;
    if (terms.empty()) terms = {"method", "method:eta", "method:gamma:relpos"};
    for (const auto& term : terms) {
        const std::vector<int> idx = factor_indices(frame, term);
        std::string slug = term;
        for (char& c : slug)
            if (c == ':') c = '_';
        write_effects_csv(effect_means(u.values, frame, idx), u.values.cols(),
                          (out_dir / ("effects_error_" + slug + ".csv")).string());
        write_effects_csv(effect_means(v.values, frame, idx), v.values.cols(),
                          (out_dir / ("effects_component_" + slug + ".csv")).string());
    }
    std::cout << "analysis written to " << dir << "\n";
    return 0;
}

int cmd_report(const std::string& dir, const std::string& design_spec,
               std::uint64_t base_seed) {
    const fs::path out_dir(dir);
    if (!fs::exists(out_dir / "records.csv"))
        throw std::runtime_error("no results found in " + dir + " (run `mrest run` first)");

    const std::vector<ErrorRecord> records = load_records((out_dir / "records.csv").string());
    std::vector<int> filter;
    if (!design_spec.empty() && design_spec != "all")
        filter = resolve_designs(design_spec, base_seed);

    const std::vector<SummaryRow> rows = summary_table(records, filter);
    {
        CsvWriter csv((out_dir / "summary.csv").string(), "summary v1",
                      {"design_id", "metric", "response", "method", "value", "l", "formatted"});
        for (const auto& row : rows)
            csv.row({std::to_string(row.design_id), row.metric, std::to_string(row.response),
                     std::string(method_name(row.method)), format_double(row.value),
                     std::to_string(row.l), row.formatted});
    }

    // Table-1 style console view: one block per design and metric.
    std::set<int> design_ids;
    for (const auto& row : rows) design_ids.insert(row.design_id);
    std::set<int> ords;
    for (const auto& row : rows) ords.insert(method_ordinal(row.method));
    for (int id : design_ids) {
        for (const std::string metric : {"estimation", "prediction"}) {
            std::cout << "design " << id << " — minimum " << metric << " error\n";
            std::cout << "  response";
            for (Method m : {Method::Pcr, Method::Pls1, Method::Pls2, Method::Xenv, Method::Senv,
                             Method::Ols})
                if (ords.count(method_ordinal(m))) std::cout << "\t" << method_name(m);
            std::cout << "\n";
            std::set<int> responses;
            for (const auto& row : rows) responses.insert(row.response);
            for (int j : responses) {
                std::cout << "  " << j;
                for (Method m : {Method::Pcr, Method::Pls1, Method::Pls2, Method::Xenv,
                                 Method::Senv, Method::Ols}) {
                    if (!ords.count(method_ordinal(m))) continue;
                    for (const auto& row : rows)
                        if (row.design_id == id && row.metric == metric && row.response == j &&
                            row.method == m)
                            std::cout << "\t" << row.formatted;
                }
                std::cout << "\n";
            }
        }
    }

    // Plot-ready score data for the density figures.
    if (fs::exists(out_dir / "u.csv") && fs::exists(out_dir / "design_key.csv")) {
        const AssembledDataset u = load_wide((out_dir / "u.csv").string(), "u");
        const AssembledDataset v = load_wide((out_dir / "v.csv").string(), "v");
        const std::vector<SimDesign> designs =
            load_design_key((out_dir / "design_key.csv").string());
        const FactorFrame frame = factor_frame(u.keys, designs);
        write_scores_csv(u, frame, pca_scores(u.values),
                         (out_dir / "pca_scores_error.csv").string());
        write_scores_csv(v, frame, pca_scores(v.values),
                         (out_dir / "pca_scores_component.csv").string());
    }
    std::cout << "summary written to " << (out_dir / "summary.csv").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-response estimation benchmark"};
    app.set_config("--config", "", "plain-text key = value configuration file");
    app.require_subcommand(1);

    RunConfig config;
    std::string design_spec = "all";
    std::string method_spec = "all";
    int share_flag = 0;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--designs", design_spec,
                        "design selection: 'all', ids/ranges ('1,5,9-12'), '9-like', '29-like'");
        cmd->add_option("--replicates", config.replicates, "replicates per (design, method)");
        cmd->add_option("--methods", method_spec, "comma-separated methods or 'all'");
        cmd->add_option("--base-seed", config.base_seed, "base seed for all streams");
        cmd->add_flag("--share-datasets", share_flag,
                      "share datasets across methods within a replicate");
        cmd->add_option("--out", config.output_dir, "output directory")
            ->envname("MREST_OUTPUT_DIR");
    };

    CLI::App* grid_cmd = app.add_subcommand("grid", "print the 32-design factorial grid");
    grid_cmd->add_option("--base-seed", config.base_seed, "base seed");

    CLI::App* sim_cmd = app.add_subcommand("simulate", "emit populations and datasets only");
    add_common(sim_cmd);

    CLI::App* run_cmd = app.add_subcommand("run", "run the study and persist u, v, records");
    add_common(run_cmd);
    run_cmd->add_option("--lmax", config.lmax, "maximum component count");
    run_cmd->add_option("--senv-dim", config.senv_response_dim,
                        "response dimension for the simultaneous envelope");
    run_cmd->add_option("--parallel", config.parallel_width, "worker count (0 = hardware)")
        ->envname("MREST_PARALLEL");
    run_cmd->add_option("--prereduce-cap", config.prereduce_cap,
                        "variance fraction kept by wide-data pre-reduction");
    run_cmd->add_flag("--export-coefficients", config.export_coefficients,
                      "also write per-task coefficient-path CSVs");

    std::string analyze_dir = config.output_dir;
    std::vector<std::string> effect_terms;
    CLI::App* analyze_cmd =
        app.add_subcommand("analyze", "MANOVA, PCA scores and effect tables from stored u, v");
    analyze_cmd->add_option("--out", analyze_dir, "directory holding run outputs")
        ->envname("MREST_OUTPUT_DIR");
    analyze_cmd->add_option("--effects", effect_terms,
                            "effect terms like 'method:gamma:relpos' (repeatable)");

    std::string report_dir = config.output_dir;
    std::string report_designs;
    CLI::App* report_cmd =
        app.add_subcommand("report", "summary tables and plot-ready score data");
    report_cmd->add_option("--out", report_dir, "directory holding run outputs")
        ->envname("MREST_OUTPUT_DIR");
    report_cmd->add_option("--designs", report_designs, "restrict the summary to these designs");

    CLI11_PARSE(app, argc, argv);

    try {
        if (grid_cmd->parsed()) return cmd_grid(config.base_seed);
        config.share_datasets_across_methods = share_flag > 0;
        if (design_spec != "all") config.designs = resolve_designs(design_spec, config.base_seed);
        if (method_spec != "all") config.methods = resolve_methods(method_spec);
        if (sim_cmd->parsed()) return cmd_simulate(config);
        if (run_cmd->parsed()) return cmd_run(config);
        if (analyze_cmd->parsed()) return cmd_analyze(analyze_dir, effect_terms);
        if (report_cmd->parsed()) return cmd_report(report_dir, report_designs, config.base_seed);
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    }
    return 0;
}
