#ifndef BTNTK_EXPERIMENT_HPP
#define BTNTK_EXPERIMENT_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "btntk/bounds.hpp"
#include "btntk/bt_loss.hpp"
#include "btntk/data.hpp"
#include "btntk/linear_model.hpp"
#include "btntk/network.hpp"
#include "btntk/ntk.hpp"
#include "btntk/trainer.hpp"

namespace btntk {

/// Where the pairs come from: an IDX image file, or synthetic sphere data of a given dimension.
struct DataSource {
    std::string mnist_path; // empty -> synthetic
    Index synthetic_dim = 784;
    double noise = 0.02;
    std::uint64_t data_seed = 0;

    PairedDataset make(Index N) const {
        if (!mnist_path.empty())
            return load_mnist_pairs(mnist_path, N, AugmentSpec{noise}, data_seed);
        return synthetic_pairs(N, synthetic_dim, noise, data_seed);
    }
};

struct SweepSpec {
    std::vector<Index> widths{1000};
    std::vector<Index> sample_sizes{10};
    Index K = 1;
    Activation activation = Activation::tanh;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    TrainConfig train;
    DataSource source;
    double init_variance = 1.0;
    double first_layer_scale = 1.0;
    bool kernel_model = true;
    unsigned jobs = 1;

    void validate() const {
        if (widths.empty() || sample_sizes.empty() || seeds.empty())
            throw PreconditionError("sweep needs nonempty widths, sample sizes and seeds");
        for (Index m : widths)
            if (m < 1)
                throw PreconditionError("widths must be positive");
        for (Index n : sample_sizes)
            if (n < 1)
                throw PreconditionError("sample sizes must be positive");
        if (K < 1)
            throw PreconditionError("embedding dimension must be positive");
        train.validate();
    }
};

struct SweepRow {
    std::string status = "ok"; // ok | not_converged | diverged
    std::uint64_t seed = 0;
    Index N = 0, M = 0, K = 0;
    Activation activation = Activation::tanh;
    double lr = 0.0, delta = 0.0;
    long epochs = 0;
    double final_loss = std::numeric_limits<double>::quiet_NaN();
    double ntk_drift_abs = std::numeric_limits<double>::quiet_NaN();
    double ntk_drift_rel = std::numeric_limits<double>::quiet_NaN();
    double lambda_min_K0 = std::numeric_limits<double>::quiet_NaN();
    double theta_drift = std::numeric_limits<double>::quiet_NaN();
    double rep_diff = std::numeric_limits<double>::quiet_NaN();
    double eta_estimate = std::numeric_limits<double>::quiet_NaN();
    Index ntk_pairs = 0;
};

/// Network run plus its matched kernel model for one (N, M, seed) cell.
struct CellOutcome {
    SweepRow row;
    NetworkParams params0;
    std::optional<RunResult> network;
    std::optional<FunctionSpaceResult> kernel;
};

inline CellOutcome run_cell(const SweepSpec& spec, const PairedDataset& data, Index M, std::uint64_t seed) {
    CellOutcome out;
    SweepRow& row = out.row;
    row.seed = seed;
    row.N = data.size();
    row.M = M;
    row.K = spec.K;
    row.activation = spec.activation;
    row.lr = spec.train.lr;
    row.delta = spec.train.delta;

    out.params0 = init_gaussian(M, spec.K, data.dim(), spec.activation, spec.init_variance, spec.first_layer_scale, seed);
    TrainConfig cfg = spec.train;
    cfg.seed = seed;
    cfg.ntk_drift = true;
    try {
        out.network = train(out.params0, data, cfg);
    } catch (const DivergenceError& e) {
        row.status = "diverged";
        row.epochs = e.epoch;
        return out;
    }
    const RunResult& run = *out.network;
    row.status = run.converged ? "ok" : "not_converged";
    row.epochs = run.epochs;
    row.final_loss = run.final_loss;
    row.ntk_drift_abs = run.ntk_drift->absolute;
    row.ntk_drift_rel = run.ntk_drift->relative;
    row.lambda_min_K0 = run.lambda_min_K0;
    row.theta_drift = run.trajectory.back().theta_drift;
    row.eta_estimate = run.eta.value_or(std::numeric_limits<double>::quiet_NaN());
    row.ntk_pairs = static_cast<Index>(run.ntk_pairs.size());

    if (spec.kernel_model && !run.ntk_subsampled) {
        const Mat f0 = forward_batch(out.params0, data.stacked());
        const Index N = data.size();
        try {
            out.kernel = train_function_space(*run.K0, stack_reps(f0.topRows(N), f0.bottomRows(N)), cfg);
            row.rep_diff = rep_difference(stack_reps(run.final_reps.topRows(N), run.final_reps.bottomRows(N)),
                                          out.kernel->state.reps, spec.K);
        } catch (const DivergenceError&) {
            // rep_diff stays NaN
        }
    }
    return out;
}

/// Runs every (N, M, seed) cell; rows come back in (N, M, seed) order whatever the completion order.
inline std::vector<SweepRow> run_sweep(const SweepSpec& spec) {
    spec.validate();
    std::vector<PairedDataset> datasets;
    for (Index N : spec.sample_sizes)
        datasets.push_back(spec.source.make(N));

    struct Task {
        std::size_t data_index;
        Index M;
        std::uint64_t seed;
    };
    std::vector<Task> tasks;
    for (std::size_t i = 0; i < spec.sample_sizes.size(); ++i)
        for (Index M : spec.widths)
            for (std::uint64_t s : spec.seeds)
                tasks.push_back({i, M, s});

    std::vector<SweepRow> rows(tasks.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t t; (t = next.fetch_add(1)) < tasks.size();)
            rows[t] = run_cell(spec, datasets[tasks[t].data_index], tasks[t].M, tasks[t].seed).row;
    };
    const unsigned jobs = std::max(1u, std::min<unsigned>(spec.jobs, static_cast<unsigned>(tasks.size())));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned j = 0; j < jobs; ++j)
            pool.emplace_back(worker);
    }
    return rows;
}

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
    os << "status,seed,N,M,K,activation,lr,delta,epochs,final_loss,ntk_drift_abs,ntk_drift_rel,lambda_min_K0,"
          "theta_drift,rep_diff,eta_estimate,ntk_pairs\n";
    for (const auto& r : rows) {
        os << r.status << ',' << r.seed << ',' << r.N << ',' << r.M << ',' << r.K << ',' << to_string(r.activation)
           << ',';
        for (double v : {r.lr, r.delta}) {
            write_csv_number(os, v);
            os << ',';
        }
        os << r.epochs << ',';
        for (double v : {r.final_loss, r.ntk_drift_abs, r.ntk_drift_rel, r.lambda_min_K0, r.theta_drift, r.rep_diff,
                         r.eta_estimate}) {
            write_csv_number(os, v);
            os << ',';
        }
        os << r.ntk_pairs << '\n';
    }
}

struct Stats {
    std::size_t count = 0;
    double mean = std::numeric_limits<double>::quiet_NaN();
    double std = std::numeric_limits<double>::quiet_NaN(); // population
    double median = std::numeric_limits<double>::quiet_NaN();
};

/// Statistics over the finite values only.
inline Stats summarize(std::vector<double> values) {
    std::erase_if(values, [](double v) { return !std::isfinite(v); });
    Stats s;
    s.count = values.size();
    if (values.empty())
        return s;
    double sum = 0.0;
    for (double v : values)
        sum += v;
    s.mean = sum / double(values.size());
    double sq = 0.0;
    for (double v : values)
        sq += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(sq / double(values.size()));
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    s.median = n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
    return s;
}

struct CellSummary {
    Index N = 0, M = 0;
    std::size_t runs = 0, converged = 0;
    Stats drift_rel, epochs, rep_diff;
};

/// Per-(N, M) aggregates over converged runs.
inline std::vector<CellSummary> summarize_sweep(const std::vector<SweepRow>& rows) {
    std::map<std::pair<Index, Index>, std::vector<const SweepRow*>> cells;
    for (const auto& r : rows)
        cells[{r.N, r.M}].push_back(&r);
    std::vector<CellSummary> out;
    for (const auto& [key, members] : cells) {
        CellSummary c;
        c.N = key.first;
        c.M = key.second;
        c.runs = members.size();
        std::vector<double> drift, epochs, rep;
        for (const SweepRow* r : members) {
            if (r->status != "ok")
                continue;
            ++c.converged;
            drift.push_back(r->ntk_drift_rel);
            epochs.push_back(double(r->epochs));
            rep.push_back(r->rep_diff);
        }
        c.drift_rel = summarize(drift);
        c.epochs = summarize(epochs);
        c.rep_diff = summarize(rep);
        out.push_back(c);
    }
    return out;
}

inline void write_summary_csv(std::ostream& os, const std::vector<CellSummary>& cells) {
    os << "N,M,runs,converged,drift_rel_mean,drift_rel_std,drift_rel_median,epochs_mean,epochs_std,epochs_median,"
          "rep_diff_mean,rep_diff_std,rep_diff_median\n";
    for (const auto& c : cells) {
        os << c.N << ',' << c.M << ',' << c.runs << ',' << c.converged;
        for (const Stats* s : {&c.drift_rel, &c.epochs, &c.rep_diff})
            for (double v : {s->mean, s->std, s->median}) {
                os << ',';
                write_csv_number(os, v);
            }
        os << '\n';
    }
}

// ---------------------------------------------------------------------------
// Generalization-bound report for one converged run
// ---------------------------------------------------------------------------

struct BoundReport {
    BoundInputs inputs;
    double nu_full = 0.0;
    double nu_sqrt_scale = 0.0;
    double nn_bound = 0.0;
};

/// Builds the bound inputs from a converged run and its kernel model: B = ||theta_T - theta_0|| + 1,
/// S and V_hat from the trace NTK at initialization, zeta = max train-point |f - g|.
inline BoundReport run_bound_report(const PairedDataset& data, const NetworkParams& params0, const RunResult& run,
                                    const FunctionSpaceResult& kernel, double delta, double eps, Index N_prime) {
    if (!run.converged)
        throw PreconditionError("bound report needs a converged network run (loss < delta); this run stopped at loss " +
                                std::to_string(run.final_loss));
    const Index N = data.size();
    const ScalarKernelGram gram = trace_kernel_gram(params0, data);
    BoundReport rep;
    BoundInputs& in = rep.inputs;
    in.N = N;
    in.N_prime = N_prime;
    in.eps = eps;
    in.delta = delta;
    in.B = (run.final_params.flatten() - params0.flatten()).norm() + 1.0;
    in.S = feature_radius(gram);
    in.V_hat = v_hat(gram, N_prime);
    in.zeta = linearization_error(stack_reps(run.final_reps.topRows(N), run.final_reps.bottomRows(N)),
                                  kernel.state.reps);
    in.K = params0.embed_dim();
    const Slack s = slack(in);
    rep.nu_full = s.nu_full;
    rep.nu_sqrt_scale = s.nu_sqrt_scale;
    rep.nn_bound = nn_population_bound(in);
    return rep;
}

/// One-row bound CSV: N, N_prime, eps, delta, B, S, V_hat, zeta, K, nu_full, nn_bound.
inline void write_bound_csv(std::ostream& os, const BoundReport& r) {
    os << "N,N_prime,eps,delta,B,S,V_hat,zeta,K,nu_full,nn_bound\n";
    const BoundInputs& in = r.inputs;
    os << in.N << ',' << in.N_prime << ',';
    for (double v : {in.eps, in.delta, in.B, in.S, in.V_hat, in.zeta}) {
        write_csv_number(os, v);
        os << ',';
    }
    os << in.K << ',';
    write_csv_number(os, r.nu_full);
    os << ',';
    write_csv_number(os, r.nn_bound);
    os << '\n';
}

} // namespace btntk

#endif
