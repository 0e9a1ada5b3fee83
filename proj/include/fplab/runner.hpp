#pragma once

// Config-driven experiment runner behind the CLI. Each subcommand reads one
// strict JSON config, runs a seeded scenario through the corresponding
// module, writes deterministic artifacts (CSV/JSON plus resolved_config.json)
// into the output directory, and evaluates embedded pass/fail checks. A
// manifest.json with timestamps, config hash, output list, and check results
// is written even when the run fails; it is the only artifact that is not
// byte-stable across reruns. Exit codes: 0 all checks pass, 1 runtime or
// check failure, 2 config error.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fplab/boundary.hpp"
#include "fplab/config.hpp"
#include "fplab/covers.hpp"
#include "fplab/datagen.hpp"
#include "fplab/federation.hpp"
#include "fplab/fixedpoint.hpp"
#include "fplab/plasticity.hpp"
#include "fplab/stochastic.hpp"

namespace fplab {

inline const char* kVersion = "fplab 0.1.0";

struct RunOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    bool quiet = false;
};

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct RunOutcome {
    int exit_code = 0;
    std::string out_dir;
    std::string status;  // pass, fail, error, config_error
    std::vector<CheckResult> checks;
    std::string error;
};

namespace detail {

inline std::string utc_now() {
    const std::time_t t =
        std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline std::string out_root() {
    const char* env = std::getenv("FPLAB_OUT_ROOT");
    return env && *env ? env : "runs";
}

inline std::string hash_hex(std::uint64_t h) {
    char buf[19];
    std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// Artifact and check bookkeeping for one run directory. The directory is
// created on the first write so config errors leave nothing behind.
class RunContext {
public:
    explicit RunContext(std::string out_dir) : out_dir_(std::move(out_dir)) {}

    const std::string& dir() const { return out_dir_; }

    void artifact(const std::string& name, const std::string& text) {
        std::filesystem::create_directories(out_dir_);
        write_text_file((std::filesystem::path(out_dir_) / name).string(), text);
        outputs_.push_back(name);
    }

    void check(const std::string& name, bool pass, const std::string& detail = "") {
        checks_.push_back({name, pass, detail});
    }

    const std::vector<std::string>& outputs() const { return outputs_; }
    const std::vector<CheckResult>& checks() const { return checks_; }

private:
    std::string out_dir_;
    std::vector<std::string> outputs_;
    std::vector<CheckResult> checks_;
};

inline Activation parse_activation(const std::string& name, const std::string& where) {
    if (name == "identity") return Activation::identity;
    if (name == "tanh") return Activation::tanh;
    if (name == "relu") return Activation::relu;
    if (name == "softmax") return Activation::softmax;
    throw ConfigError(where + ": unknown activation \"" + name + "\"");
}

// labeled 2D blobs, one cluster per class on a circle of radius 0.6
inline std::pair<std::vector<Vec>, std::vector<std::size_t>> labeled_clusters(
    std::uint64_t seed, std::size_t n, std::size_t classes) {
    Rng rng(seed);
    std::vector<Vec> xs;
    std::vector<std::size_t> ys;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t y = i % classes;
        const double ang = 2.0 * 3.14159265358979323846 * static_cast<double>(y) /
                           static_cast<double>(classes);
        xs.push_back({0.6 * std::cos(ang) + 0.25 * rng.uniform(-1.0, 1.0),
                      0.6 * std::sin(ang) + 0.25 * rng.uniform(-1.0, 1.0)});
        ys.push_back(y);
    }
    return {std::move(xs), std::move(ys)};
}

// dense square net with the end map scaled to a target spectral radius
inline Network linear_contraction(std::size_t dim, double rho, Rng& rng) {
    Mat a(dim, dim);
    for (double& v : a.data()) v = rng.uniform(-1.0, 1.0);
    const double r = spectral_radius(a);
    check_run(r > 0.0, "linear_contraction: degenerate random matrix");
    Layer l;
    l.W = scale(a, rho / r);
    l.b = rng.uniform_vec(dim, -0.5, 0.5);
    l.act = Activation::identity;
    return Network({l});
}

inline Network scalar_affine(double a, double b) {
    Layer l;
    l.W = Mat(1, 1);
    l.W(0, 0) = a;
    l.b = {b};
    l.act = Activation::identity;
    return Network({l});
}

// --- experiment bodies (one per subcommand) --------------------------------

inline void exp_fixedpoint(Block& params, Block& tol, RunContext& ctx, std::uint64_t seed) {
    const std::size_t dim = params.count("dim", 8);
    const double rho = params.number("rho", 0.6);
    const std::size_t inits = params.count("inits", 5);
    const std::size_t max_steps = params.count("max_steps", 10000);
    const double it_tol = params.number("tol", 1e-9);
    Block train = params.child("train");
    const std::size_t t_dim = train.count("dim", 2);
    const std::size_t t_width = train.count("width", 16);
    const std::size_t t_points = train.count("points", 20);
    const std::size_t t_steps = train.count("steps", 800);
    const double t_lr = train.number("lr", 0.05);
    train.finish();
    const double ratio_tol = tol.number("ratio_tol", 0.05);
    const double train_reduction = tol.number("train_reduction", 0.5);
    params.finish();
    tol.finish();
    if (!(rho > 0.0 && rho < 1.0))
        throw ConfigError(params.path() + ".rho: must be in (0, 1)");
    if (dim == 0 || inits == 0)
        throw ConfigError(params.path() + ": dim and inits must be positive");

    Rng rng(mix_seed(seed, 1));
    const Network net = linear_contraction(dim, rho, rng);
    IterateOptions opt;
    opt.max_steps = max_steps;
    opt.tol = it_tol;

    std::vector<Vec> starts;
    for (std::size_t i = 0; i < inits; ++i) starts.push_back(rng.uniform_vec(dim, -1.0, 1.0));

    Csv curves({"init", "step", "error", "ratio"});
    bool all_converged = !starts.empty();
    std::vector<double> first_ratios;
    for (std::size_t i = 0; i < starts.size(); ++i) {
        const IterateResult res = iterate(net, starts[i], opt);
        if (res.outcome != IterateOutcome::converged || !res.report.has_value()) {
            all_converged = false;
            continue;
        }
        const Vec& star = res.report->point;
        double prev = -1.0;
        for (std::size_t t = 0; t < res.states.size(); ++t) {
            const double err = norm2(sub(res.states[t], star));
            const double ratio = t == 0 || prev <= 0.0
                                     ? std::numeric_limits<double>::quiet_NaN()
                                     : err / prev;
            curves.row({fmt_size(i), fmt_size(t), fmt_double(err), fmt_double(ratio)});
            if (i == 0 && t > 0 && prev > 1000.0 * it_tol) first_ratios.push_back(err / prev);
            prev = err;
        }
    }
    ctx.artifact("curves.csv", curves.str());
    ctx.check("iterates converged", all_converged);

    double late_ratio = std::numeric_limits<double>::quiet_NaN();
    if (!first_ratios.empty()) {
        const std::size_t take = std::min<std::size_t>(20, first_ratios.size());
        double s = 0.0;
        for (std::size_t k = first_ratios.size() - take; k < first_ratios.size(); ++k)
            s += first_ratios[k];
        late_ratio = s / static_cast<double>(take);
    }
    ctx.check("per-step ratio matches rho",
              std::isfinite(late_ratio) && std::abs(late_ratio - rho) <= ratio_tol,
              "measured " + fmt_double(late_ratio) + " target " + fmt_double(rho));

    const EnumerationResult enumr = enumerate_fixed_points(net, starts, opt);
    Json fps = Json::array();
    for (const EnumeratedFixedPoint& fp : enumr.fixed_points)
        fps.push_back(Json{{"point", json_vec(fp.report.point)},
                           {"residual_norm", fp.report.residual_norm},
                           {"jacobian_radius", fp.report.jacobian_radius},
                           {"stable", fp.report.stable},
                           {"iterations_used", fp.report.iterations_used},
                           {"basin_size", fp.basin_seeds.size()}});
    Json contraction = Json::object();
    if (!enumr.fixed_points.empty()) {
        const ContractionReport cr =
            contraction_report(net, enumr.fixed_points.front().report.point);
        contraction = Json{{"layer_rhos", json_vec(cr.layer_rhos)},
                           {"end_to_end_rho", cr.end_to_end_rho},
                           {"stable", cr.stable},
                           {"residual_norm", cr.residual_norm}};
        ctx.check("contraction stable below 1", cr.stable == (rho < 1.0),
                  "end-to-end rho " + fmt_double(cr.end_to_end_rho));
    } else {
        ctx.check("contraction stable below 1", false, "no fixed point found");
    }

    Rng trng(mix_seed(seed, 2));
    Network tnet = Network::random({t_dim, t_width, t_dim},
                                   {Activation::tanh, Activation::identity}, trng, 0.8);
    std::vector<Vec> tdata;
    for (std::size_t i = 0; i < t_points; ++i) tdata.push_back(trng.uniform_vec(t_dim, -1.0, 1.0));
    const ResidualTrainResult tr = train_residual(tnet, tdata, t_steps, t_lr);
    Csv loss({"step", "loss"});
    for (std::size_t t = 0; t < tr.loss_curve.size(); ++t)
        loss.row({fmt_size(t), fmt_double(tr.loss_curve[t])});
    ctx.artifact("train_curve.csv", loss.str());
    ctx.check("residual training reduces the energy",
              tr.final_mean_residual <= train_reduction * tr.initial_mean_residual,
              "initial " + fmt_double(tr.initial_mean_residual) + " final " +
                  fmt_double(tr.final_mean_residual));

    const Json report{{"fixed_points", fps},
                      {"loss_curve", json_vec(tr.loss_curve)},
                      {"contraction", contraction}};
    ctx.artifact("report.json", json_text(report));
}

inline void exp_covers(Block& params, Block& tol, RunContext& ctx, std::uint64_t seed) {
    const std::size_t width = params.count("width", 8);
    const std::size_t samples = params.count("samples", 64);
    const std::size_t snapshots = params.count("snapshots", 4);
    const std::size_t steps_per = params.count("steps_per_snapshot", 150);
    const double lr = params.number("lr", 0.05);
    const Activation act =
        parse_activation(params.text("activation", "tanh"), params.path() + ".activation");
    params.finish();
    tol.finish();
    if (snapshots < 2) throw ConfigError(params.path() + ".snapshots: need at least two");
    if (act == Activation::softmax)
        throw ConfigError(params.path() + ".activation: covers need elementwise units");

    Rng rng(mix_seed(seed, 1));
    Network net = Network::random({2, width, 2}, {act, act}, rng, 0.9);
    std::vector<Vec> data;
    for (std::size_t i = 0; i < samples; ++i) data.push_back(rng.uniform_vec(2, -1.0, 1.0));
    const CoverRule rule = CoverRule::for_activation(act);

    std::vector<CoverMap> maps;
    maps.push_back(cover_map(net, data, rule, 0));
    for (std::size_t s = 1; s < snapshots; ++s) {
        net = train_residual(net, data, steps_per, lr).net;
        maps.push_back(cover_map(net, data, rule, s * steps_per));
    }
    ctx.artifact("covers.csv", covers_csv(maps).str());

    bool sizes_ok = true;
    for (const CoverMap& m : maps)
        for (const auto& layer : m.covers)
            for (const auto& node : layer) sizes_ok = sizes_ok && node.size() <= samples;
    ctx.check("cover sizes bounded by the sample count", sizes_ok);

    Json drift = Json::array();
    bool jaccard_ok = true;
    for (std::size_t s = 1; s < maps.size(); ++s) {
        const CoverDriftReport d = cover_drift(maps[s - 1], maps[s]);
        for (const auto& row : d.node_jaccard)
            for (double j : row) jaccard_ok = jaccard_ok && j >= 0.0 && j <= 1.0;
        drift.push_back(Json{{"from", maps[s - 1].iteration},
                             {"to", maps[s].iteration},
                             {"mean_drift_per_layer", json_vec(d.mean_drift_per_layer)},
                             {"coverage_after", json_vec(d.coverage_after)}});
    }
    ctx.check("jaccard drift within [0, 1]", jaccard_ok);
    ctx.artifact("drift.json", json_text(Json{{"snapshots", drift}}));
}

inline void exp_boundary(Block& params, Block& tol, RunContext& ctx, std::uint64_t seed) {
    const std::size_t width = params.count("width", 6);
    const std::size_t classes = params.count("classes", 2);
    const std::size_t n = params.count("samples", 24);
    Block s0 = params.child("stage0");
    const std::size_t s0_steps = s0.count("steps", 300);
    const double s0_lr = s0.number("lr", 0.5);
    s0.finish();
    Block s1 = params.child("stage1");
    const std::size_t s1_steps = s1.count("steps", 400);
    const double s1_lr = s1.number("lr", 0.1);
    s1.finish();
    Block s2 = params.child("stage2");
    const std::size_t s2_steps = s2.count("steps", 300);
    const double s2_lr = s2.number("lr", 0.02);
    const double lambda = s2.number("lambda", 0.4);
    const double eps = s2.number("eps", 0.5);
    s2.finish();
    params.finish();
    tol.finish();
    if (classes < 2) throw ConfigError(params.path() + ".classes: need at least two");

    auto [xs, ys] = labeled_clusters(mix_seed(seed, 1), n, classes);
    LabeledBatch batch{xs, ys};

    Rng rng(mix_seed(seed, 2));
    Network net = Network::random({2, width, classes}, {Activation::tanh, Activation::softmax},
                                  rng, 1.0);

    const Stage0Result st0 = stage0_pretrain(net, batch, s0_steps, s0_lr);
    SftData sft;
    sft.inputs = xs;
    sft.labels = ys;
    sft.classification = true;
    const StageResult st1 = stage1_sft(st0.net, sft, s1_steps, s1_lr);

    WeakBoundarySet wb;
    Vec target(classes, 0.0);
    target[0] = 0.7;
    target[1] = 0.3;
    wb.push_back({{0.8, -0.8}, eps, Reward::neg_squared_distance(target)});
    const StageResult st2 = stage2_perturbed(st1.net, sft, wb, lambda, s2_steps, s2_lr);

    Csv curves({"stage", "step", "value"});
    for (std::size_t t = 0; t < st0.curve.size(); ++t)
        curves.row({"0", fmt_size(t), fmt_double(st0.curve[t].kl)});
    for (std::size_t t = 0; t < st1.base_curve.size(); ++t)
        curves.row({"1", fmt_size(t), fmt_double(st1.base_curve[t])});
    for (std::size_t t = 0; t < st2.base_curve.size(); ++t)
        curves.row({"2", fmt_size(t), fmt_double(st2.base_curve[t])});
    ctx.artifact("curves.csv", curves.str());
    if (!st2.boundary_curve.empty()) {
        Csv bc({"step", "boundary_value"});
        for (std::size_t t = 0; t < st2.boundary_curve.size(); ++t)
            bc.row({fmt_size(t), fmt_double(st2.boundary_curve[t])});
        ctx.artifact("boundary_curve.csv", bc.str());
    }

    ctx.check("pretraining reduces the conditional divergence",
              st0.curve.back().kl < st0.curve.front().kl,
              "initial " + fmt_double(st0.curve.front().kl) + " final " +
                  fmt_double(st0.curve.back().kl));
    ctx.check("supervised stage reduces its loss",
              st1.base_curve.back() < st1.base_curve.front(),
              "initial " + fmt_double(st1.base_curve.front()) + " final " +
                  fmt_double(st1.base_curve.back()));
    ctx.check("perturbed stage tracked the boundary term",
              lambda == 0.0 || st2.boundary_curve.size() == s2_steps + 1);

    Json warnings = Json::array();
    for (const WeaknessWarning& w : st2.warnings)
        warnings.push_back(Json{{"step", w.step},
                                {"boundary_magnitude", w.boundary_magnitude},
                                {"base_loss", w.base_loss}});
    const Json summary{
        {"stage0", Json{{"initial_kl", st0.curve.front().kl},
                        {"final_kl", st0.curve.back().kl}}},
        {"stage1", Json{{"initial_loss", st1.base_curve.front()},
                        {"final_loss", st1.base_curve.back()}}},
        {"stage2", Json{{"final_loss", st2.base_curve.back()},
                        {"boundary_first",
                         st2.boundary_curve.empty() ? 0.0 : st2.boundary_curve.front()},
                        {"boundary_last",
                         st2.boundary_curve.empty() ? 0.0 : st2.boundary_curve.back()},
                        {"warnings", warnings}}}};
    ctx.artifact("stages.json", json_text(summary));
}

inline void exp_stochastic(Block& params, Block& tol, RunContext& ctx, std::uint64_t seed) {
    const double rho = params.number("rho", 0.5);
    const double bias = params.number("bias", 0.25);
    const double sigma = params.number("sigma", 0.02);
    const std::vector<std::size_t> depths =
        params.counts("depths", {1, 2, 3, 4, 6, 8, 11, 15, 20, 26, 33, 40});
    const std::size_t n_runs = params.count("runs", 400);
    const bool expect_plateau = params.flag("expect_plateau", true);
    Block sm = params.child("summary");
    const std::size_t burn_in = sm.count("burn_in", 500);
    const std::size_t draws = sm.count("draws", 4000);
    sm.finish();
    params.finish();
    const double union_slack = tol.number("union_slack", 1e-12);
    tol.finish();
    if (!(std::abs(rho) < 1.0))
        throw ConfigError(params.path() + ".rho: |rho| must be below 1");

    const Network net = scalar_affine(rho, bias);
    const ExpVsUnionReport rep = exp_vs_union_experiment(net, sigma, depths, n_runs, seed);
    ctx.artifact("depth_table.csv", rep.csv());

    bool union_ok = rep.rows.size() == depths.size();
    bool freq_ok = true;
    for (const ExpVsUnionRow& r : rep.rows) {
        union_ok = union_ok && r.measured_freq <= r.union_sum + union_slack;
        freq_ok = freq_ok && r.measured_freq >= 0.0 && r.measured_freq <= 1.0;
    }
    ctx.check("union sum dominates the measured frequency", union_ok);
    ctx.check("frequencies are probabilities", freq_ok);
    if (expect_plateau)
        ctx.check("deep tail plateaus instead of compounding", rep.plateau,
                  "plateau ratio " + fmt_double(rep.plateau_ratio));

    const StochasticSummary sum = stochastic_fixed_point(net, sigma, burn_in, draws, seed);
    const Json dist{{"x_star", json_vec(sum.x_star)},
                    {"mean", json_vec(sum.mean)},
                    {"cov", json_mat(sum.cov)},
                    {"q05", json_vec(sum.q05)},
                    {"q50", json_vec(sum.q50)},
                    {"q95", json_vec(sum.q95)},
                    {"mean_shift", json_vec(sum.mean_shift)},
                    {"delta_bar", json_vec(sum.delta_bar)},
                    {"n_draws", sum.n_draws}};
    const Json report{{"stationary_scale", rep.stationary_scale},
                      {"threshold", rep.threshold},
                      {"eps_fit", rep.eps_fit},
                      {"plateau", rep.plateau},
                      {"plateau_ratio", rep.plateau_ratio},
                      {"distribution", dist}};
    ctx.artifact("summary.json", json_text(report));
}

inline void exp_plasticity(Block& params, Block& tol, RunContext& ctx, std::uint64_t seed) {
    const std::size_t samples = params.count("samples", 400);
    const double band_frac = params.number("band_frac", 0.1);
    const double c0 = params.number("c0", 1.0);
    std::vector<GaussianComponent> comps;
    const Json& arr = params.elements("components");
    if (arr.empty()) {
        comps.push_back({{0.0, 0.0}, Mat::diag({1.0, 1.0}), 0.5});
        comps.push_back({{1.5, 0.0}, Mat::diag({1.0, 0.25}), 0.5});
        for (const GaussianComponent& g : comps) {
            Json& slot = params.element_slot("components");
            slot["mu"] = json_vec(g.mu);
            Vec d;
            for (std::size_t i = 0; i < g.sigma.rows(); ++i) d.push_back(g.sigma(i, i));
            slot["sigma_diag"] = json_vec(d);
            slot["c"] = g.c;
        }
    } else {
        std::size_t idx = 0;
        for (const Json& e : arr) {
            Block eb(e, params.path() + ".components[" + std::to_string(idx) + "]",
                     params.element_slot("components"));
            const Vec mu = eb.numbers("mu", {0.0, 0.0});
            const Vec sd = eb.numbers("sigma_diag", Vec(mu.size(), 1.0));
            const double c = eb.number("c", 0.5);
            eb.finish();
            if (sd.size() != mu.size())
                throw ConfigError(eb.path() + ": sigma_diag must match mu");
            comps.push_back({mu, Mat::diag(sd), c});
            ++idx;
        }
    }
    Block track = params.child("track");
    const bool track_on = track.flag("enabled", true);
    // width 2 keeps the hidden cloud full-rank in its ambient space; wider
    // nets put it on a thin manifold and the fitted mixture degenerates
    const std::size_t t_width = track.count("width", 2);
    const std::size_t t_steps = track.count("steps", 300);
    const std::size_t t_every = track.count("every", 100);
    const double t_lr = track.number("lr", 0.05);
    const std::size_t t_k = track.count("k", 2);
    const std::size_t t_points = track.count("eval_points", 64);
    const std::size_t t_samples = track.count("samples_per_component", 200);
    track.finish();
    params.finish();
    tol.finish();
    if (track_on && (t_every < 1 || t_every > t_steps))
        throw ConfigError(params.path() + ".track.every: need 1 <= every <= steps");

    const double r = curvature_functional(comps, samples, mix_seed(seed, 1), band_frac);
    const double c_eff = effective_capacity(c0, r);
    ctx.check("curvature load is finite and nonnegative", std::isfinite(r) && r >= 0.0,
              "R " + fmt_double(r));
    ctx.check("capacity follows C0 / (1 + R)", c_eff == c0 / (1.0 + r));

    Json comp_dump = Json::array();
    for (const GaussianComponent& g : comps)
        comp_dump.push_back(
            Json{{"mu", json_vec(g.mu)}, {"sigma", json_mat(g.sigma)}, {"c", g.c}});
    ctx.artifact("components.json",
                 json_text(Json{{"components", comp_dump},
                                {"R", r},
                                {"C0", c0},
                                {"C_eff", c_eff},
                                {"band_frac", band_frac},
                                {"samples_per_component", samples}}));

    if (track_on) {
        Rng rng(mix_seed(seed, 2));
        Network net = Network::random({2, t_width, 2}, {Activation::tanh, Activation::tanh},
                                      rng, 0.9);
        std::vector<Vec> data;
        for (std::size_t i = 0; i < t_points; ++i)
            data.push_back(rng.uniform_vec(2, -1.0, 1.0));
        std::vector<Checkpoint> cks{{0, net}};
        for (std::size_t done = 0; done < t_steps; done += t_every) {
            const std::size_t chunk = std::min(t_every, t_steps - done);
            net = train_residual(net, data, chunk, t_lr).net;
            cks.push_back({done + chunk, net});
        }
        const RigidityCurve curve =
            rigidity_track(cks, data, t_k, c0, mix_seed(seed, 3), t_samples);
        ctx.artifact("rigidity.csv", curve.csv());
        bool capped = true;
        for (const RigidityPoint& p : curve.points)
            capped = capped && p.C_eff <= c0 && p.R >= 0.0;
        ctx.check("tracked capacity never exceeds C0", capped);
    }
}

inline void exp_datagen(Block& params, Block& tol, RunContext& ctx, std::uint64_t seed) {
    const std::string cls = params.text("class", "polynomial");
    const std::size_t dim = params.count("dim", 1);
    const std::size_t n = params.count("n", 200);
    const double fd_step = params.number("fd_step", 1e-4);
    const std::size_t grid = params.count("grid_per_axis", 5);
    const Vec lin_a = params.numbers("lin_a", Vec(dim, 1.0));
    const double lin_b = params.number("lin_b", 0.0);
    const Vec coeffs = params.numbers("coeffs", {0.0, 0.0, 1.0});
    const std::size_t depth = params.count("depth", 3);
    const double freq = params.number("freq", 3.0);
    const Vec boundaries = params.numbers("boundaries", {0.0});
    const Vec jumps = params.numbers("jumps", {1.0});
    const Vec slopes = params.numbers("slopes", {0.0, 0.0});
    params.finish();
    tol.finish();

    FunctionSpec spec;
    if (cls == "linear")
        spec = FunctionSpec::linear(lin_a, lin_b, seed);
    else if (cls == "polynomial")
        spec = FunctionSpec::polynomial(dim, coeffs, seed);
    else if (cls == "high_order")
        spec = FunctionSpec::high_order(dim, depth, freq, seed);
    else if (cls == "piecewise")
        spec = FunctionSpec::piecewise(dim, boundaries, jumps, slopes, seed);
    else
        throw ConfigError("params.class: unknown function class \"" + cls + "\"");

    const Dataset ds = generate(spec, n);
    ctx.artifact("dataset.csv", ds.csv());

    Json sidecar{{"class", cls}, {"dim", spec.dim}, {"seed", spec.seed}};
    if (cls == "linear") sidecar.update(Json{{"a", json_vec(lin_a)}, {"b", lin_b}});
    if (cls == "polynomial") sidecar["coeffs"] = json_vec(coeffs);
    if (cls == "high_order") sidecar.update(Json{{"depth", depth}, {"freq", freq}});
    if (cls == "piecewise")
        sidecar.update(Json{{"boundaries", json_vec(boundaries)},
                            {"jumps", json_vec(jumps)},
                            {"slopes", json_vec(slopes)}});
    ctx.artifact("spec.json", json_text(sidecar));

    const ComplexityReport rep =
        nonlinear_complexity(make_function(spec), piece_partition(spec), fd_step, grid);
    const std::vector<AxisTags> tags = curvature_tags(ds, fd_step);
    const double batch = data_complexity_batch(tags);
    ctx.artifact("complexity.json",
                 json_text(Json{{"curvature_terms", json_vec(rep.curvature_terms)},
                                {"boundary_terms", json_vec(rep.boundary_terms)},
                                {"c_nonlinear", rep.c_nonlinear},
                                {"c_data_batch", batch},
                                {"cancellation_warning", rep.cancellation_warning}}));
    ctx.check("complexity score is finite and nonnegative",
              std::isfinite(rep.c_nonlinear) && rep.c_nonlinear >= 0.0,
              "C " + fmt_double(rep.c_nonlinear));
    ctx.check("dataset has the requested size", ds.inputs.size() == n);
    if (cls == "piecewise")
        ctx.check("one boundary term per configured jump",
                  rep.boundary_terms.size() == jumps.size());
}

inline void exp_federation(Block& params, Block& tol, RunContext& ctx, std::uint64_t seed) {
    const std::size_t clients = params.count("clients", 3);
    const std::size_t hidden = params.count("hidden", 6);
    const std::size_t per_client = params.count("samples_per_client", 8);
    const bool shared = params.flag("shared_data", true);
    const std::size_t rounds = params.count("rounds", 20);
    const double perturb = params.number("perturb_scale", 0.4);
    const bool expect_alignment = params.flag("expect_alignment", true);
    const std::vector<std::size_t> anchors = params.counts("anchors", {});
    Block hy = params.child("hyper");
    FedHyper hyper;
    hyper.beta = hy.number("beta", 0.1);
    hyper.lambda = hy.number("lambda", 0.5);
    hyper.eta = hy.number("eta", 0.05);
    hyper.damping = hy.number("damping", 1e-2);
    hyper.probe_count = hy.count("probe_count", 16);
    hy.finish();
    params.finish();
    const double fp_tol = tol.number("fixed_point_tol", 1e-3);
    tol.finish();
    if (perturb < 0.0)
        throw ConfigError(params.path() + ".perturb_scale: must be nonnegative");
    for (std::size_t a : anchors)
        if (a >= clients)
            throw ConfigError(params.path() + ".anchors: index out of range");

    Rng nrng(mix_seed(seed, 1));
    const Network foundation = Network::random(
        {2, hidden, 2}, {Activation::tanh, Activation::softmax}, nrng, 1.0);
    std::vector<ClientData> parts;
    for (std::size_t i = 0; i < clients; ++i) {
        auto [xs, ys] = labeled_clusters(mix_seed(seed, shared ? 2 : 2 + i), per_client, 2);
        parts.push_back({std::move(xs), std::move(ys)});
    }
    FederationState state = init_federation(foundation, clients, std::move(parts), hyper, seed);
    freeze_anchors(state, anchors);
    if (perturb > 0.0) perturb_clients(state, perturb, mix_seed(seed, 7));

    std::vector<RoundMetrics> history;
    for (std::size_t r = 0; r < rounds; ++r) history.push_back(run_round(state));
    ctx.artifact("rounds.csv", federation_csv(history));

    bool finite = true;
    for (const RoundMetrics& m : history)
        for (std::size_t i = 0; i < m.local_loss.size(); ++i)
            finite = finite && std::isfinite(m.local_loss[i]) &&
                     std::isfinite(m.kl_mixture[i]) && std::isfinite(m.grad_norm[i]);
    ctx.check("round metrics stay finite", finite);
    if (expect_alignment && !history.empty())
        ctx.check("coupling lowers the equilibrium score",
                  history.back().equilibrium < history.front().equilibrium,
                  "first " + fmt_double(history.front().equilibrium) + " last " +
                      fmt_double(history.back().equilibrium));

    const FixedPointCheck fp = fixed_point_check(state, fp_tol);
    const Json summary{{"rounds", rounds},
                       {"first_equilibrium",
                        history.empty() ? 0.0 : history.front().equilibrium},
                       {"final_equilibrium",
                        history.empty() ? 0.0 : history.back().equilibrium},
                       {"grad_norms", json_vec(fp.grad_norms)},
                       {"converged", fp.converged},
                       {"anchors", anchors}};
    ctx.artifact("summary.json", json_text(summary));
}

}  // namespace detail

// Runs one experiment config through its module. Throws ConfigError for
// schema problems (callers map that to exit 2); anything thrown while the
// scenario runs is recorded in the manifest and yields exit 1.
inline RunOutcome run_experiment(const std::string& command, const Json& config,
                                 const RunOverrides& ov) {
    static const std::set<std::string> known{"fixedpoint", "covers",     "boundary",
                                             "stochastic", "plasticity", "datagen",
                                             "federation"};
    if (!known.count(command)) throw ConfigError("unknown subcommand \"" + command + "\"");

    Json resolved = Json::object();
    Block top(config, "config", resolved);
    const std::string experiment = top.text("experiment", command);
    if (experiment != command)
        throw ConfigError("config.experiment: config names \"" + experiment +
                          "\" but the subcommand is \"" + command + "\"");
    std::uint64_t seed = top.seed("seed", 0);
    std::string out = top.text("out", detail::out_root() + "/" + experiment);
    Block params = top.child("params");
    Block tolerances = top.child("tolerances");
    top.finish();
    if (ov.seed) seed = *ov.seed;
    if (ov.out) out = *ov.out;
    resolved["seed"] = seed;
    resolved["out"] = out;

    RunOutcome outcome;
    outcome.out_dir = out;
    const std::string started = detail::utc_now();
    detail::RunContext ctx(out);

    // Every body reads and finish()es its params and tolerances before doing
    // any work, so a ConfigError here still means nothing was written.
    std::string error;
    try {
        if (command == "fixedpoint")
            detail::exp_fixedpoint(params, tolerances, ctx, seed);
        else if (command == "covers")
            detail::exp_covers(params, tolerances, ctx, seed);
        else if (command == "boundary")
            detail::exp_boundary(params, tolerances, ctx, seed);
        else if (command == "stochastic")
            detail::exp_stochastic(params, tolerances, ctx, seed);
        else if (command == "plasticity")
            detail::exp_plasticity(params, tolerances, ctx, seed);
        else if (command == "datagen")
            detail::exp_datagen(params, tolerances, ctx, seed);
        else
            detail::exp_federation(params, tolerances, ctx, seed);
    } catch (const ConfigError&) {
        throw;  // schema problems are the caller's to report, no artifacts
    } catch (const std::exception& e) {
        error = e.what();
    }

    std::filesystem::create_directories(out);
    write_text_file((std::filesystem::path(out) / "resolved_config.json").string(),
                    json_text(resolved));

    bool all_pass = error.empty();
    for (const CheckResult& c : ctx.checks()) all_pass = all_pass && c.pass;
    outcome.status = !error.empty() ? "error" : all_pass ? "pass" : "fail";
    outcome.checks = ctx.checks();
    outcome.error = error;
    outcome.exit_code = all_pass ? 0 : 1;

    std::vector<std::string> outputs = ctx.outputs();
    outputs.push_back("resolved_config.json");
    std::sort(outputs.begin(), outputs.end());
    Json checks = Json::array();
    for (const CheckResult& c : ctx.checks())
        checks.push_back(Json{{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    const Json manifest{{"command", command},
                        {"experiment", experiment},
                        {"config_hash", detail::hash_hex(fnv1a(json_text(resolved)))},
                        {"version", kVersion},
                        {"started_utc", started},
                        {"finished_utc", detail::utc_now()},
                        {"outputs", outputs},
                        {"checks", checks},
                        {"status", outcome.status},
                        {"error", error}};
    write_text_file((std::filesystem::path(out) / "manifest.json").string(),
                    json_text(manifest));

    if (!ov.quiet) {
        for (const CheckResult& c : ctx.checks())
            std::printf("[%s] %s%s%s\n", c.pass ? " ok " : "FAIL", c.name.c_str(),
                        c.detail.empty() ? "" : " - ", c.detail.c_str());
        if (!error.empty()) std::printf("error: %s\n", error.c_str());
        std::printf("%s: %s -> %s\n", command.c_str(), outcome.status.c_str(), out.c_str());
    }
    return outcome;
}

// Runs members in declared order, fail-soft: a member's failure (including
// its config errors) is recorded and the suite moves on. Exit 1 if any
// member did not pass. Member configs resolve relative to the suite config.
inline RunOutcome run_suite(const Json& config, const RunOverrides& ov,
                            const std::string& config_dir) {
    Json resolved = Json::object();
    Block top(config, "config", resolved);
    const std::string experiment = top.text("experiment", "suite");
    std::uint64_t seed = top.seed("seed", 0);
    const bool seed_forced = ov.seed.has_value();
    std::string out = top.text("out", detail::out_root() + "/" + experiment);
    if (ov.seed) seed = *ov.seed;
    if (ov.out) out = *ov.out;
    resolved["seed"] = seed;
    resolved["out"] = out;

    struct Member {
        std::string name;
        std::string command;
        std::string config_path;
    };
    std::vector<Member> members;
    std::set<std::string> names;
    const Json& arr = top.elements("members");
    std::size_t idx = 0;
    for (const Json& e : arr) {
        Block eb(e, "config.members[" + std::to_string(idx) + "]",
                 top.element_slot("members"));
        Member m;
        m.name = eb.text("name", "member" + std::to_string(idx));
        m.command = eb.text("command", "");
        m.config_path = eb.text("config", "");
        eb.finish();
        if (m.command.empty() || m.command == "suite")
            throw ConfigError(eb.path() + ".command: must name a non-suite subcommand");
        if (m.config_path.empty())
            throw ConfigError(eb.path() + ".config: member config path is required");
        if (!names.insert(m.name).second)
            throw ConfigError(eb.path() + ".name: duplicate member name \"" + m.name + "\"");
        members.push_back(std::move(m));
        ++idx;
    }
    top.finish();

    RunOutcome outcome;
    outcome.out_dir = out;
    const std::string started = detail::utc_now();
    std::filesystem::create_directories(out);
    write_text_file((std::filesystem::path(out) / "resolved_config.json").string(),
                    json_text(resolved));

    Json summary_members = Json::array();
    std::size_t failed = 0;
    for (const Member& m : members) {
        std::filesystem::path cfg_path(m.config_path);
        if (cfg_path.is_relative()) cfg_path = std::filesystem::path(config_dir) / cfg_path;
        RunOverrides mov;
        mov.quiet = ov.quiet;
        mov.out = (std::filesystem::path(out) / m.name).string();
        if (seed_forced) mov.seed = seed;
        std::string status;
        int exit_code = 0;
        try {
            const Json mcfg = parse_config_text(read_text_file(cfg_path.string()),
                                                cfg_path.string());
            const RunOutcome sub = run_experiment(m.command, mcfg, mov);
            status = sub.status;
            exit_code = sub.exit_code;
        } catch (const std::exception& e) {
            status = "config_error";
            exit_code = 2;
            if (!ov.quiet) std::printf("member %s: %s\n", m.name.c_str(), e.what());
        }
        if (exit_code != 0) ++failed;
        outcome.checks.push_back({"member " + m.name, exit_code == 0, status});
        summary_members.push_back(Json{{"name", m.name},
                                       {"command", m.command},
                                       {"status", status},
                                       {"exit_code", exit_code}});
    }

    outcome.status = failed == 0 ? "pass" : "fail";
    outcome.exit_code = failed == 0 ? 0 : 1;
    const Json summary{{"members", summary_members},
                       {"total", members.size()},
                       {"failed", failed},
                       {"status", outcome.status}};
    write_text_file((std::filesystem::path(out) / "summary.json").string(),
                    json_text(summary));

    const Json manifest{{"command", "suite"},
                        {"experiment", experiment},
                        {"config_hash", detail::hash_hex(fnv1a(json_text(resolved)))},
                        {"version", kVersion},
                        {"started_utc", started},
                        {"finished_utc", detail::utc_now()},
                        {"outputs", Json::array({"resolved_config.json", "summary.json"})},
                        {"checks", Json::array()},
                        {"status", outcome.status},
                        {"error", ""}};
    write_text_file((std::filesystem::path(out) / "manifest.json").string(),
                    json_text(manifest));

    if (!ov.quiet)
        std::printf("suite: %s (%zu/%zu members passed) -> %s\n", outcome.status.c_str(),
                    members.size() - failed, members.size(), out.c_str());
    return outcome;
}

}  // namespace fplab
