#include <CLI11.hpp>

#include "gasketlab/experiments.hpp"

using gasketlab::ExperimentConfig;

int main(int argc, char** argv) {
    CLI::App app{"gasketlab: spectral experiments for subordinate walks on "
                 "gasket graphs with Poissonian potentials"};
    app.require_subcommand(1);

    ExperimentConfig cfg;
    std::string config_file;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_file, "flat key = value config file");
        sub->add_option("--M", cfg.M, "outer scale (triangle side 2^M)");
        sub->add_option("--n", cfg.n, "resolution level (cells of side 2^-n)");
        sub->add_option("--phi", cfg.phi, "Laplace exponent, e.g. stable_drift:b=1,g=0.5dw");
        sub->add_option("--profile", cfg.profile,
                        "potential profile, e.g. indicator:A=4,a0=0.25");
        sub->add_option("--nu", cfg.nu, "Poisson intensity per unit mass");
        sub->add_option("--tgrid", cfg.tgrid, "log grid lo:hi:steps");
        sub->add_option("--reps", cfg.reps, "replicate count");
        sub->add_option("--seed", cfg.seed, "base seed");
        sub->add_option("--out", cfg.out, "output directory");
        sub->add_option("--threads", cfg.threads, "worker threads (0 = hardware)");
        sub->add_option("--check", cfg.check,
                        "ids checks: lower|upper|both|monotonicity|reduction");
        sub->add_option("--mode", cfg.mode, "boundary mode: dirichlet|reflected");
        sub->add_option("--t", cfg.t, "single evaluation time");
        sub->add_option("--eps-scales", cfg.eps_scales, "obstacle scales, e.g. 4,5,6");
        sub->add_option("--configs", cfg.configs, "obstacle configurations per scale");
        sub->add_option("--obs-a", cfg.obs_a, "obstacle profile range multiplier");
        sub->add_option("--obs-kappa", cfg.obs_kappa, "ball radius exponent: b = 2^kappa");
        sub->add_option("--obs-delta", cfg.obs_delta, "obstacle delta");
        sub->add_option("--obs-K", cfg.obs_K, "eigenvalue truncation K");
        sub->add_option("--obs-R", cfg.obs_R, "scale ratio R > 3");
        sub->add_option("--obs-gamma", cfg.obs_gamma, "appendix index: dw or e.g. 0.5dw");
        sub->add_option("--obs-A", cfg.obs_A, "obstacle profile amplitude");
        sub->add_option("--fit-tlo", cfg.fit_tlo, "Laplace-domain fit window start");
        sub->add_option("--fit-thi", cfg.fit_thi, "Laplace-domain fit window end");
        sub->add_option("--fit-xlo-frac", cfg.fit_xlo_frac, "measure window / lambda1_free");
        sub->add_option("--fit-xhi-frac", cfg.fit_xhi_frac, "measure window / lambda1_free");
    };

    for (const char* name : {"geometry", "spectrum", "ids", "lifschitz", "survival",
                             "obstacles", "probes", "validate"}) {
        add_common(app.add_subcommand(name));
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    cfg.experiment = app.get_subcommands().front()->get_name();
    if (!config_file.empty()) {
        try {
            gasketlab::load_config_file(cfg, config_file);
        } catch (const std::exception& e) {
            std::fprintf(stderr, "validation error: %s\n", e.what());
            return 2;
        }
        // flags override the file
        try {
            app.clear();
            app.parse(argc, argv);
        } catch (const CLI::ParseError& e) {
            int code = app.exit(e);
            return code == 0 ? 0 : 2;
        }
        cfg.experiment = app.get_subcommands().front()->get_name();
    }
    return gasketlab::run_experiment(cfg);
}
