// btntk: command-line harness for the Barlow Twins NTK experiments. Every subcommand writes CSV.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "btntk/btntk.hpp"

using namespace btntk;

namespace {

struct Options {
    std::vector<Index> widths{1000};
    std::vector<Index> samples{10};
    Index embed_dim = 1;
    std::string activation = "tanh";
    double lr = 0.5;
    double delta = 1e-5;
    long max_epochs = 20000;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::string out = "-";
    unsigned jobs = 1;
    std::string mnist;
    Index synthetic_dim = 784;
    double noise = 0.02;
    std::uint64_t data_seed = 0;

    double init_variance = 1.0;
    double first_layer_scale = 1.0;
    long record_every = 1;
    Index ntk_max_dim = 4000;
    std::string summary;
    std::string save_params;

    double eps = 0.1;
    Index n_prime = 0;

    Index lin_dim = 5;
    Index lin_rank = 0;
    double lin_lo = 0.05, lin_hi = 0.95;
    double t_end = 3.0;
    double step = 0.0;

    double target = 0.0;
    Index probe_width = 10000;
};

// Output stream for --out; "-" is stdout.
class Output {
  public:
    explicit Output(const std::string& path) {
        if (path != "-") {
            file_ = std::make_unique<std::ofstream>(path);
            if (!*file_)
                throw Error("cannot open output file " + path);
        }
    }
    std::ostream& stream() { return file_ ? *file_ : std::cout; }

  private:
    std::unique_ptr<std::ofstream> file_;
};

SweepSpec make_spec(const Options& o) {
    SweepSpec spec;
    spec.widths = o.widths;
    spec.sample_sizes = o.samples;
    spec.K = o.embed_dim;
    spec.activation = parse_activation(o.activation);
    spec.seeds = o.seeds;
    spec.train.lr = o.lr;
    spec.train.delta = o.delta;
    spec.train.max_epochs = o.max_epochs;
    spec.train.record_every = o.record_every;
    spec.train.ntk_max_dim = o.ntk_max_dim;
    spec.source.mnist_path = o.mnist;
    spec.source.synthetic_dim = o.synthetic_dim;
    spec.source.noise = o.noise;
    spec.source.data_seed = o.data_seed;
    spec.init_variance = o.init_variance;
    spec.first_layer_scale = o.first_layer_scale;
    spec.jobs = o.jobs;
    spec.validate();
    return spec;
}

void log_line(const std::string& s) { std::fprintf(stderr, "%s\n", s.c_str()); }

int cmd_train(const Options& o) {
    const SweepSpec spec = make_spec(o);
    const Index N = spec.sample_sizes.front(), M = spec.widths.front();
    const auto data = spec.source.make(N);
    const auto params0 = init_gaussian(M, spec.K, data.dim(), spec.activation, spec.init_variance,
                                       spec.first_layer_scale, spec.seeds.front());
    TrainConfig cfg = spec.train;
    cfg.seed = spec.seeds.front();
    const RunResult r = train(params0, data, cfg);
    Output out(o.out);
    write_trajectory_csv(out.stream(), r.trajectory);
    if (!o.save_params.empty())
        save_params(o.save_params, r.final_params);
    log_line(concat(r.converged ? "converged" : "not converged", " after ", r.epochs, " epochs, loss ",
                    r.final_loss, ", relative NTK drift ", r.ntk_drift ? r.ntk_drift->relative : 0.0));
    return 0;
}

int cmd_sweep(const Options& o, bool kernel_model) {
    SweepSpec spec = make_spec(o);
    spec.kernel_model = kernel_model;
    const auto rows = run_sweep(spec);
    {
        Output out(o.out);
        write_sweep_csv(out.stream(), rows);
    }
    std::string summary = o.summary;
    if (summary.empty() && o.out != "-")
        summary = o.out + ".summary.csv";
    if (!summary.empty()) {
        Output s(summary);
        write_summary_csv(s.stream(), summarize_sweep(rows));
    }
    return 0;
}

int cmd_kernel_model(const Options& o) {
    const SweepSpec spec = make_spec(o);
    const Index N = spec.sample_sizes.front(), M = spec.widths.front();
    const auto data = spec.source.make(N);
    const auto cell = run_cell(spec, data, M, spec.seeds.front());
    if (!cell.network)
        throw Error("network run diverged at epoch " + std::to_string(cell.row.epochs));
    if (!cell.kernel)
        throw Error("kernel model unavailable (diverged, or the kernel was subsampled: raise --ntk-max-dim)");
    Output out(o.out);
    auto& os = out.stream();
    os << "point,k,network,kernel_model\n";
    const Mat& net = cell.network->final_reps;
    const Vec& ker = cell.kernel->state.reps;
    for (Index p = 0; p < net.rows(); ++p)
        for (Index k = 0; k < net.cols(); ++k) {
            os << p << ',' << k << ',';
            write_csv_number(os, net(p, k));
            os << ',';
            write_csv_number(os, ker(p * net.cols() + k));
            os << '\n';
        }
    log_line(concat("rep_diff ", cell.row.rep_diff, ", kernel model epochs ", cell.kernel->epochs));
    return 0;
}

int cmd_bound(const Options& o) {
    const SweepSpec spec = make_spec(o);
    const Index N = spec.sample_sizes.front(), M = spec.widths.front();
    const auto data = spec.source.make(N);
    const auto cell = run_cell(spec, data, M, spec.seeds.front());
    if (!cell.network || !cell.kernel)
        throw PreconditionError("bound report needs a converged network and kernel model run");
    const Index n_prime = o.n_prime > 0 ? o.n_prime : N;
    const auto rep = run_bound_report(data, cell.params0, *cell.network, *cell.kernel, spec.train.delta, o.eps, n_prime);
    Output out(o.out);
    write_bound_csv(out.stream(), rep);
    log_line("bound is conditional on B = ||theta_T - theta_0|| + 1 as measured on this run");
    return 0;
}

int cmd_lindyn(const Options& o) {
    const Index K = o.embed_dim, p = o.lin_dim;
    const Index rank = o.lin_rank > 0 ? o.lin_rank : p;
    const auto state = random_linear_instance(K, p, rank, o.lin_lo, o.lin_hi, o.seeds.front());
    const double h = o.step > 0.0 ? o.step : default_step(state.W, state.Gamma);
    const auto traj = integrate(state, o.t_end, h);
    Output out(o.out);
    write_lindyn_csv(out.stream(), traj);
    log_line(concat("eta ", traj.eta, ", h ", h, ", eigenvalue monotonicity ",
                    eigen_monotonicity_check(traj) ? "holds" : "violated"));
    return 0;
}

int cmd_calibrate(const Options& o) {
    const SweepSpec spec = make_spec(o);
    const Index N = spec.sample_sizes.front();
    const auto data = spec.source.make(N);
    const double target = o.target > 0.0 ? o.target : default_calibration_target(spec.K);
    const double s = calibrate_first_layer_scale(data, spec.K, target, o.probe_width, spec.seeds.front(),
                                                 spec.activation);
    const double est =
        expected_diag_cross_moment(data, probe_first_layer(o.probe_width, data.dim(), s, spec.seeds.front()),
                                   spec.activation);
    Output out(o.out);
    auto& os = out.stream();
    os << "K,target,first_layer_scale,estimate\n" << spec.K << ',';
    for (double v : {target, s}) {
        write_csv_number(os, v);
        os << ',';
    }
    write_csv_number(os, est);
    os << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Barlow Twins NTK laboratory"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "Flat key=value file; command-line flags take precedence");

    Options o;
    app.add_option("--widths", o.widths, "Hidden widths M")->delimiter(',');
    app.add_option("--samples", o.samples, "Sample sizes N")->delimiter(',');
    app.add_option("--embed-dim", o.embed_dim, "Embedding dimension K");
    app.add_option("--activation", o.activation, "tanh or relu");
    app.add_option("--lr", o.lr, "Learning rate");
    app.add_option("--delta", o.delta, "Stop once the loss is below delta");
    app.add_option("--max-epochs", o.max_epochs, "Epoch cap");
    app.add_option("--seeds", o.seeds, "Initialization seeds")->delimiter(',');
    app.add_option("--out", o.out, "Output CSV path, - for stdout");
    app.add_option("--jobs", o.jobs, "Concurrent sweep cells");
    app.add_option("--mnist", o.mnist, "IDX image file; synthetic data when absent");
    app.add_option("--synthetic-dim", o.synthetic_dim, "Dimension of synthetic inputs");
    app.add_option("--noise", o.noise, "Per-coordinate augmentation noise");
    app.add_option("--data-seed", o.data_seed, "Seed for data and augmentation");
    app.add_option("--init-variance", o.init_variance, "Variance of the Gaussian initialization");
    app.add_option("--first-layer-scale", o.first_layer_scale, "Multiplier on the first-layer weights");
    app.add_option("--record-every", o.record_every, "Trajectory cadence in epochs");
    app.add_option("--ntk-max-dim", o.ntk_max_dim, "Largest 2NK assembled without subsampling");
    app.add_option("--summary", o.summary, "Summary CSV path (default <out>.summary.csv)");
    app.add_option("--save-params", o.save_params, "Write final parameters (train)");
    app.add_option("--eps", o.eps, "Probability parameter (bound)");
    app.add_option("--n-prime", o.n_prime, "Pairs used for V_hat (bound; default N)");
    app.add_option("--lin-dim", o.lin_dim, "Feature dimension p (lindyn)");
    app.add_option("--lin-rank", o.lin_rank, "Rank of Gamma (lindyn; default p)");
    app.add_option("--lin-lo", o.lin_lo, "Lower edge of spec C(0) (lindyn)");
    app.add_option("--lin-hi", o.lin_hi, "Upper edge of spec C(0) (lindyn)");
    app.add_option("--t-end", o.t_end, "Integration horizon (lindyn)");
    app.add_option("--step", o.step, "RK4 step (lindyn; default from the initial state)");
    app.add_option("--target", o.target, "Calibration target for E[C_kk] (default (2K-1)/(2K))");
    app.add_option("--probe-width", o.probe_width, "Probe neurons for calibration");

    auto* train_cmd = app.add_subcommand("train", "Train one network, write its trajectory");
    auto* sweep_cmd = app.add_subcommand("sweep", "Network and kernel model over the (N, M, seed) grid");
    auto* drift_cmd = app.add_subcommand("ntk-drift", "Sweep without the kernel model");
    auto* kernel_cmd = app.add_subcommand("kernel-model", "Network vs frozen-kernel representations for one cell");
    auto* bound_cmd = app.add_subcommand("bound", "Generalization-bound quantities for one converged run");
    auto* lindyn_cmd = app.add_subcommand("lindyn", "Integrate the linear Barlow Twins gradient flow");
    auto* calib_cmd = app.add_subcommand("calibrate", "ReLU first-layer scale for a target E[C_kk]");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_cmd->parsed())
            return cmd_train(o);
        if (sweep_cmd->parsed())
            return cmd_sweep(o, true);
        if (drift_cmd->parsed())
            return cmd_sweep(o, false);
        if (kernel_cmd->parsed())
            return cmd_kernel_model(o);
        if (bound_cmd->parsed())
            return cmd_bound(o);
        if (lindyn_cmd->parsed())
            return cmd_lindyn(o);
        if (calib_cmd->parsed())
            return cmd_calibrate(o);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
