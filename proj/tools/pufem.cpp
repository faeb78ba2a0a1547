#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <pufem/pufem.hpp>

namespace {

using pufem::ExperimentConfig;

struct RunFlags {
    std::string config_path, experiment, levels, offset, out_dir;
    double C = 0, epsilon = 0;
    int s = 0, dim = 0, threads = 0, degree = 0;
    std::uint64_t seed = 0;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
    cmd->add_option("--config", f.config_path, "JSON config file");
    cmd->add_option("--experiment", f.experiment,
                    "cosine-s1|cosine-s2|velocity|condition|offset-sweep");
    cmd->add_option("--levels", f.levels, "level range a..b (or a single level)");
    cmd->add_option("--C", f.C, "smoothing constant in sigma = C h^{1/s}");
    cmd->add_option("--s", f.s, "coupling exponent (1 or 2)");
    cmd->add_option("--epsilon", f.epsilon, "stabilization parameter");
    cmd->add_option("--dim", f.dim, "space dimension (2 or 3)");
    cmd->add_option("--offset", f.offset, "grid origin dx,dy(,dz)");
    cmd->add_option("--out", f.out_dir, "output directory");
    cmd->add_option("--threads", f.threads, "worker thread count");
    cmd->add_option("--degree", f.degree, "polynomial degree P");
    cmd->add_option("--seed", f.seed, "random seed");
}

ExperimentConfig build_config(const CLI::App* cmd, const RunFlags& f) {
    ExperimentConfig cfg;
    if (cmd->count("--config")) {
        cfg = pufem::load_config(f.config_path);
    } else {
        pufem::apply_experiment_defaults(cfg);
    }
    if (cmd->count("--experiment")) {
        cfg.experiment = f.experiment;
        pufem::apply_experiment_defaults(cfg);
    }
    if (cmd->count("--levels"))
        std::tie(cfg.level_lo, cfg.level_hi) = pufem::parse_levels(f.levels);
    if (cmd->count("--C")) cfg.C = f.C;
    if (cmd->count("--s")) cfg.s = f.s;
    if (cmd->count("--epsilon")) cfg.epsilon = f.epsilon;
    if (cmd->count("--dim")) cfg.dim = f.dim;
    if (cmd->count("--offset")) cfg.offset = pufem::parse_offset(f.offset);
    if (cmd->count("--out")) cfg.out_dir = f.out_dir;
    if (cmd->count("--threads")) cfg.threads = f.threads;
    if (cmd->count("--degree")) cfg.degree = f.degree;
    if (cmd->count("--seed")) cfg.seed = f.seed;
    pufem::require(cfg.dim == 2 || cfg.dim == 3, "dim must be 2 or 3");
    pufem::require(cfg.s == 1 || cfg.s == 2, "s must be 1 or 2");
    pufem::require(cfg.offset.empty() ||
                       static_cast<int>(cfg.offset.size()) == cfg.dim,
                   "offset must have dim entries");
    return cfg;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path);
    pufem::require(os.good(), "cannot open output file: " + path);
    return os;
}

/// One solved level of the cosine or velocity experiment, with everything the
/// field points into kept alive.
template <int D>
struct SolvedLevel {
    pufem::PartitionFunction pf;
    pufem::detail::LevelSetup<D> setup;
    std::unique_ptr<pufem::PufemSpace<D>> space;
    pufem::SmoothedField<D> field;

    SolvedLevel(const ExperimentConfig& cfg, int level)
        : pf(pufem::PartitionConfig{cfg.pf_resolution, 1e-14,
                                    std::max(6, cfg.degree + 1)}) {
        const bool vortex = cfg.experiment == "velocity";
        const int nc = vortex ? (D == 3 ? 3 : 1) : 1;
        pufem::detail::build_level(setup, cfg, level,
                                   pufem::detail::default_origin<D>(cfg, level));
        auto particles = pufem::sample_particles(
            setup.rule, nc, [&](const pufem::Vec<D>& x, double* out) {
                if (vortex)
                    pufem::vortex_vorticity<D>(x, out);
                else
                    out[0] = pufem::cosine_field(x[0]);
            });
        space = std::make_unique<pufem::PufemSpace<D>>(setup.cls, pf, cfg.degree);
        pufem::ReferenceIntegralTable<D> table(
            pf, cfg.degree, pufem::ReferenceTableConfig{cfg.table_quad_order});
        pufem::AssemblyOptions opts{cfg.use_reference_tables, cfg.threads};
        auto M = pufem::assemble_mass(*space, setup.rule, table, opts);
        auto J = pufem::assemble_stabilization(*space, table);
        pufem::SystemBundle A(M, &J, cfg.epsilon);
        auto rhs = pufem::assemble_rhs(*space, particles);
        std::vector<std::vector<double>> coeffs;
        for (int c = 0; c < nc; ++c) {
            auto sol =
                pufem::solve_pcg(A, A.diag, rhs[c], cfg.solver_tol, cfg.solver_maxiter);
            pufem::check(!sol.breakdown, "solver breakdown");
            coeffs.push_back(std::move(sol.x));
        }
        field = pufem::make_field(*space, std::move(coeffs));
    }
};

template <int D>
void sample_field_grid(const ExperimentConfig& cfg, int level, int grid_n,
                       std::ostream& os) {
    SolvedLevel<D> solved(cfg, level);
    std::vector<pufem::Vec<D>> points;
    pufem::Index<D> i{};
    bool done = false;
    while (!done) {
        pufem::Vec<D> p;
        for (int k = 0; k < D; ++k)
            p[k] = -0.5 + (double(i[k]) + 0.5) / double(grid_n);
        points.push_back(p);
        done = true;
        for (int k = 0; k < D; ++k) {
            if (++i[k] < grid_n) {
                done = false;
                break;
            }
            i[k] = 0;
        }
    }
    pufem::write_field_csv(solved.field, points, os);
}

template <int D>
void export_matrix(const ExperimentConfig& cfg, int level, const std::string& which,
                   std::ostream& os) {
    pufem::PartitionFunction pf(pufem::PartitionConfig{
        cfg.pf_resolution, 1e-14, std::max(6, cfg.degree + 1)});
    pufem::detail::LevelSetup<D> s;
    pufem::detail::build_level(s, cfg, level,
                               pufem::detail::default_origin<D>(cfg, level));
    pufem::PufemSpace<D> space(s.cls, pf, cfg.degree);
    pufem::ReferenceIntegralTable<D> table(
        pf, cfg.degree, pufem::ReferenceTableConfig{cfg.table_quad_order});
    if (which == "mass") {
        pufem::AssemblyOptions opts{cfg.use_reference_tables, cfg.threads};
        pufem::assemble_mass(space, s.rule, table, opts).export_coo(os);
    } else if (which == "stab") {
        pufem::assemble_stabilization(space, table).export_coo(os);
    } else {
        pufem::require(false, "unknown matrix kind: " + which);
    }
}

template <int D>
void classify_cmd(const ExperimentConfig& cfg, int level, std::ostream& os) {
    pufem::detail::LevelSetup<D> s;
    pufem::detail::build_level(s, cfg, level,
                               pufem::detail::default_origin<D>(cfg, level));
    pufem::dump_classification_csv(s.cls, os);
    std::fprintf(stderr, "[pufem] level %d: %zu active (%d interior, %d cut), %zu nodes\n",
                 level, s.cls.elements.size(), s.cls.n_interior, s.cls.n_cut,
                 s.cls.nodes.size());
}

template <int D>
void particles_cmd(int level, const std::string& field, std::ostream& os) {
    auto mesh = pufem::refine_uniform(pufem::unit_cube_mesh<D>(), level);
    auto rule = pufem::midpoint_rule(mesh);
    if (field == "cosine") {
        auto p = pufem::sample_particles(
            rule, 1,
            [](const pufem::Vec<D>& x, double* out) { out[0] = pufem::cosine_field(x[0]); });
        pufem::write_particles_csv(p, os);
    } else if (field == "vortex") {
        auto p = pufem::sample_particles(rule, D == 3 ? 3 : 1,
                                         pufem::vortex_vorticity<D>);
        pufem::write_particles_csv(p, os);
    } else {
        pufem::require(false, "unknown field: " + field);
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Smooth partition-of-unity particle regularization toolkit"};
    app.set_version_flag("--version", pufem::kVersion);
    app.require_subcommand(1);

    RunFlags f;
    int level = 0, grid_n = 16, resolution = 4096;
    std::string out_path = "-", in_path, matrix_kind = "mass", field_kind = "cosine";

    auto* run = app.add_subcommand("run", "run a batch experiment, write one CSV");
    add_run_flags(run, f);

    auto* dump_phi = app.add_subcommand("dump-phi", "partition function table as CSV");
    dump_phi->add_option("--resolution", resolution, "table nodes on [-1,1]");
    dump_phi->add_option("--out", out_path, "output file ('-' = stdout)");

    auto* mesh_cmd = app.add_subcommand("mesh", "export/inspect refined cube meshes");
    mesh_cmd->add_option("--dim", f.dim, "space dimension")->default_val(3);
    mesh_cmd->add_option("--level", level, "refinement level");
    mesh_cmd->add_option("--out", out_path, "mesh text output ('-' = stdout)");
    mesh_cmd->add_option("--in", in_path, "read a mesh file and print a summary");

    auto* classify = app.add_subcommand("classify", "element classification as CSV");
    add_run_flags(classify, f);
    classify->add_option("--level", level, "refinement level")->default_val(2);
    classify->add_option("--classify-out", out_path, "output file ('-' = stdout)");

    auto* assemble = app.add_subcommand("assemble", "matrix export, coordinate format");
    add_run_flags(assemble, f);
    assemble->add_option("--level", level, "refinement level")->default_val(2);
    assemble->add_option("--matrix", matrix_kind, "mass|stab");
    assemble->add_option("--matrix-out", out_path, "output file ('-' = stdout)");

    auto* sample = app.add_subcommand("sample", "solve one level, sample field on a grid");
    add_run_flags(sample, f);
    sample->add_option("--level", level, "refinement level")->default_val(2);
    sample->add_option("--grid", grid_n, "points per axis")->default_val(16);
    sample->add_option("--sample-out", out_path, "output file ('-' = stdout)");

    auto* particles = app.add_subcommand("particles", "particle field as CSV");
    particles->add_option("--dim", f.dim, "space dimension")->default_val(3);
    particles->add_option("--level", level, "refinement level")->default_val(2);
    particles->add_option("--field", field_kind, "cosine|vortex");
    particles->add_option("--out", out_path, "output file ('-' = stdout)");

    CLI11_PARSE(app, argc, argv);

    auto with_out = [&](auto&& body) {
        if (out_path == "-") {
            body(std::cout);
        } else {
            auto os = open_out(out_path);
            body(os);
        }
    };

    try {
        if (run->parsed()) {
            ExperimentConfig cfg = build_config(run, f);
            std::string csv = pufem::run_and_render(cfg);
            std::string path = cfg.out_dir + "/" + pufem::csv_filename(cfg.experiment);
            auto os = open_out(path);
            os << csv;
            std::cout << path << "\n";
        } else if (dump_phi->parsed()) {
            pufem::PartitionFunction pf(pufem::PartitionConfig{resolution});
            with_out([&](std::ostream& os) { pf.dump_csv(os); });
        } else if (mesh_cmd->parsed()) {
            if (mesh_cmd->count("--in")) {
                std::ifstream is(in_path);
                pufem::require(is.good(), "cannot open mesh file: " + in_path);
                if (f.dim == 2) {
                    auto m = pufem::read_mesh<2>(is);
                    std::printf("2 %zu %zu volume %.17g max_edge %.17g\n",
                                m.vertices.size(), m.cells.size(), total_volume(m),
                                max_edge_length(m));
                } else {
                    auto m = pufem::read_mesh<3>(is);
                    std::printf("3 %zu %zu volume %.17g max_edge %.17g\n",
                                m.vertices.size(), m.cells.size(), total_volume(m),
                                max_edge_length(m));
                }
            } else {
                with_out([&](std::ostream& os) {
                    if (f.dim == 2)
                        write_mesh(pufem::refine_uniform(pufem::unit_cube_mesh<2>(), level), os);
                    else
                        write_mesh(pufem::refine_uniform(pufem::unit_cube_mesh<3>(), level), os);
                });
            }
        } else if (classify->parsed()) {
            ExperimentConfig cfg = build_config(classify, f);
            with_out([&](std::ostream& os) {
                if (cfg.dim == 2)
                    classify_cmd<2>(cfg, level, os);
                else
                    classify_cmd<3>(cfg, level, os);
            });
        } else if (assemble->parsed()) {
            ExperimentConfig cfg = build_config(assemble, f);
            with_out([&](std::ostream& os) {
                if (cfg.dim == 2)
                    export_matrix<2>(cfg, level, matrix_kind, os);
                else
                    export_matrix<3>(cfg, level, matrix_kind, os);
            });
        } else if (sample->parsed()) {
            ExperimentConfig cfg = build_config(sample, f);
            with_out([&](std::ostream& os) {
                if (cfg.dim == 2)
                    sample_field_grid<2>(cfg, level, grid_n, os);
                else
                    sample_field_grid<3>(cfg, level, grid_n, os);
            });
        } else if (particles->parsed()) {
            with_out([&](std::ostream& os) {
                if (f.dim == 2)
                    particles_cmd<2>(level, field_kind, os);
                else
                    particles_cmd<3>(level, field_kind, os);
            });
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
