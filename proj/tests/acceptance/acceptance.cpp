// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any criterion fails.

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>

#include "gradient_checks.hpp"
#include "oracles.hpp"

#include "organseg/aggregation.hpp"
#include "organseg/heatmap.hpp"
#include "organseg/localization.hpp"
#include "organseg/metrics.hpp"
#include "organseg/phantom.hpp"
#include "organseg/pipeline.hpp"
#include "organseg/volume_io.hpp"

using namespace organseg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(const char* id, const char* title, const std::function<Outcome()>& body, double limit_s = 0.0) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (limit_s > 0.0 && secs >= limit_s) {
        o.pass = false;
        o.detail += "; over the " + std::to_string(static_cast<int>(limit_s)) + " s budget";
    }
    if (!o.pass) ++failures;
    std::printf("%s %s %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str(), secs);
    std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), f, a, b, c, d);
    return buf;
}

bool bits_equal(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

// Criterion 1.
Outcome gradient_suites() {
    const auto l2 = oracle::l2_gradient_suite(200, 101);
    const auto ce = oracle::ce_dice_gradient_suite(200, 102);
    const auto bw = oracle::backward_gradient_suite(100, 10, 103);
    const bool pass = l2.instances >= 100 && ce.instances >= 100 && l2.passed(1e-4) && ce.passed(1e-4) &&
                      bw.passed(1e-3);
    return {pass, fmt("l2 worst rel %.2e over %.0f instances, ce_dice %.2e over %.0f", l2.worst_relative,
                      static_cast<double>(l2.instances), ce.worst_relative, static_cast<double>(ce.instances)) +
                      fmt(", backward %.2e over %.0f nets", bw.worst_relative, static_cast<double>(bw.instances))};
}

// Criterion 2: corpus-style jittered centroids on the 3 mm working grid of the phantom canvas.
Outcome centroid_closure() {
    CorpusOptions opts;
    opts.n_volumes = 50;
    opts.n_train = 50;
    opts.jitter = {2.0, 0.1};
    opts.seed = 2024;
    const Volume3D canvas(opts.templ.canvas, VolumeKind::intensity, 0.0);
    const auto g = resample(canvas, {3.0, 3.0, 3.0}, Interpolation::trilinear).grid();
    std::size_t n = 0;
    std::size_t within = 0;
    double worst = 0.0;
    // 50 jittered members, every organ of each.
    for (std::size_t i = 0; i < opts.n_volumes; ++i) {
        for (const auto& organ : corpus_member_spec(opts, i).organs) {
            const auto h = synthesize_heatmaps({{organ.id, organ.center_mm}}, g, 150.0);
            const auto est = extract_centroid(h.channels[0], 0.1);
            double d2 = 0.0;
            for (int a = 0; a < 3; ++a) d2 += std::pow(est.centroid_mm[a] - organ.center_mm[a], 2);
            const double d = est.found ? std::sqrt(d2) : 1e9;
            worst = std::max(worst, d);
            within += d <= 3.0;
            ++n;
        }
    }
    return {within == n, fmt("%.0f/%.0f centroids within 3 mm, worst %.3f mm", static_cast<double>(within),
                             static_cast<double>(n), worst)};
}

// Criterion 3.
Outcome brute_force() {
    oracle::TestRng rng(303);
    std::size_t mismatches = 0;
    std::size_t checks = 0;
    auto grid = [&] { return oracle::grid(rng.integer(1, 5), rng.integer(1, 5), rng.integer(1, 5)); };

    // Dice: exhaustive on 3x3x1, then random grids.
    const auto g9 = oracle::grid(3, 3, 1);
    for (int ma = 0; ma < 512; ++ma) {
        Volume3D a(g9, VolumeKind::label, 0.0);
        for (int v = 0; v < 9; ++v) a.data()[v] = (ma >> v) & 1;
        for (int mb = 0; mb < 512; ++mb) {
            Volume3D b(g9, VolumeKind::label, 0.0);
            for (int v = 0; v < 9; ++v) b.data()[v] = (mb >> v) & 1;
            mismatches += dice(a, b) != oracle::naive_dice(a, b);
            ++checks;
        }
    }
    for (int t = 0; t < 500; ++t) {
        const auto g = grid();
        const auto a = oracle::random_mask(g, rng, rng.uniform());
        const auto b = oracle::random_mask(g, rng, rng.uniform());
        mismatches += dice(a, b) != oracle::naive_dice(a, b);
        ++checks;
    }
    const std::size_t dice_bad = mismatches;

    double worst_l2 = 0.0;
    double worst_ce = 0.0;
    for (int t = 0; t < 500; ++t) {
        const auto g = grid();
        HeatmapStack a;
        HeatmapStack b;
        const int ch = static_cast<int>(rng.integer(1, 3));
        for (int c = 0; c < ch; ++c) {
            a.channels.push_back(oracle::random_volume(g, VolumeKind::heatmap, rng, 0.0, 1.0));
            b.channels.push_back(oracle::random_volume(g, VolumeKind::heatmap, rng, 0.0, 1.0));
            a.organ_ids.push_back(c + 1);
            b.organ_ids.push_back(c + 1);
        }
        worst_l2 = std::max(worst_l2, oracle::rel_err(l2_loss(a, b), oracle::naive_l2(a.channels, b.channels)));
        const auto p = oracle::random_volume(g, VolumeKind::probability, rng, 0.0, 1.0);
        const auto m = oracle::random_mask(g, rng, rng.uniform());
        const std::vector<double> pv(p.data().begin(), p.data().end());
        const std::vector<double> mv(m.data().begin(), m.data().end());
        worst_ce = std::max(worst_ce, oracle::rel_err(ce_dice_loss({p, m}), oracle::naive_ce_dice(pv, mv)));
        checks += 2;
    }

    std::size_t agg_bad = 0;
    for (int t = 0; t < 500; ++t) {
        const auto g = grid();
        CropSet set{{}, g};
        const int n = static_cast<int>(rng.integer(1, 4));
        for (int id = 1; id <= n; ++id) {
            Index3 lo{};
            Index3 hi{};
            for (int a = 0; a < 3; ++a) {
                lo[a] = rng.integer(-1, g.dims[a] - 1);
                hi[a] = rng.integer(lo[a] + 1, g.dims[a] + 1);
            }
            const BoundingBox box{lo, hi, g.spacing};
            Volume3D prob({box.size(), g.spacing, {0.0, 0.0, 0.0}}, VolumeKind::probability, 0.0);
            for (auto& x : prob.data()) x = static_cast<double>(rng.integer(0, 10)) / 10.0;
            set.crops.push_back({id, std::move(prob), box});
        }
        const auto r = aggregate(set);
        const auto ref = oracle::naive_aggregate(set, 0.5);
        for (std::int64_t v = 0; v < g.voxel_count(); ++v) {
            agg_bad += r.labels.data()[v] != ref.labels[static_cast<std::size_t>(v)] ||
                       r.winning_probability.data()[v] != ref.winning[static_cast<std::size_t>(v)];
        }
        ++checks;
    }

    std::size_t box_bad = 0;
    double worst_stats = 0.0;
    const OrganCatalog catalog{{1, "a", 0.0}, {2, "b", 0.0}, {3, "c", 0.0}};
    for (int t = 0; t < 200; ++t) {
        const auto g = oracle::grid(5, 5, 5, rng.uniform(0.5, 3.0));
        std::vector<Volume3D> maps;
        for (int k = 0; k < 3; ++k) {
            Volume3D lab(g, VolumeKind::label, 0.0);
            for (auto& x : lab.data()) x = static_cast<double>(rng.integer(0, 12) / 4);
            for (int id = 1; id <= 3; ++id) lab.data()[static_cast<std::size_t>(rng.integer(0, 124))] = id;
            maps.push_back(std::move(lab));
        }
        const auto stats = compute_organ_stats(maps, catalog);
        for (int id = 1; id <= 3; ++id) {
            Vec3 sum{};
            for (const auto& lab : maps) {
                const auto a = tight_box(lab, id);
                const auto b = oracle::naive_tight_box(lab, id);
                box_bad += !(a && b && *a == *b);
                const auto sz = b->size();
                for (int ax = 0; ax < 3; ++ax) sum[ax] += static_cast<double>(sz[ax]) * g.spacing[ax];
            }
            for (int ax = 0; ax < 3; ++ax) {
                worst_stats = std::max(worst_stats, oracle::rel_err(stats.at(id).mean_size_mm[ax], sum[ax] / 3.0));
            }
        }
        ++checks;
    }

    const bool pass = dice_bad == 0 && agg_bad == 0 && box_bad == 0 && worst_l2 <= 1e-9 && worst_ce <= 1e-9 &&
                      worst_stats <= 1e-9;
    return {pass, fmt("dice mismatches %.0f, aggregation mismatches %.0f, tight-box mismatches %.0f",
                      static_cast<double>(dice_bad), static_cast<double>(agg_bad), static_cast<double>(box_bad)) +
                      fmt(", worst rel l2 %.1e ce_dice %.1e box stats %.1e", worst_l2, worst_ce, worst_stats) +
                      fmt(", %.0f instances", static_cast<double>(checks))};
}

PipelineConfig acceptance_config() {
    PipelineConfig c;  // 10 volumes, 7 train / 3 test, 3 organs
    c.seed = 42;
    return c;
}

// Criterion 7, volume part.
bool volume_round_trip(const fs::path& dir, std::string& detail) {
    oracle::TestRng rng(707);
    std::size_t bad = 0;
    for (int t = 0; t < 20; ++t) {
        const auto g = oracle::grid(rng.integer(1, 9), rng.integer(1, 9), rng.integer(1, 9), rng.uniform(0.5, 4.0),
                                    {rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-50, 50)});
        std::vector<Volume3D> vols;
        vols.push_back(oracle::random_volume(g, VolumeKind::intensity, rng, -1024.0, 3000.0));
        vols.push_back(oracle::random_volume(g, VolumeKind::probability, rng, 0.0, 1.0));
        vols.push_back(oracle::random_volume(g, VolumeKind::heatmap, rng, 0.0, 1.0));
        Volume3D lab(g, VolumeKind::label, 0.0);
        for (auto& x : lab.data()) x = static_cast<double>(rng.integer(0, 3));
        vols.push_back(std::move(lab));
        for (std::size_t k = 0; k < vols.size(); ++k) {
            auto& v = vols[k];
            // On-disk payloads are float32; values already representable there must survive unchanged.
            for (auto& x : v.data()) x = static_cast<double>(static_cast<float>(x));
            const auto p = dir / ("rt_" + std::to_string(t) + "_" + std::to_string(k) + ".vol");
            write_volume(p, v);
            const auto back = read_volume(p);
            bool same = same_grid(back.grid(), v.grid()) && back.kind() == v.kind() && back.size() == v.size();
            for (std::int64_t n = 0; same && n < v.size(); ++n) same = bits_equal(back.data()[n], v.data()[n]);
            const auto p2 = dir / ("rt2_" + std::to_string(t) + "_" + std::to_string(k) + ".vol");
            write_volume(p2, back);
            same = same && oracle::file_bytes(p) == oracle::file_bytes(p2) &&
                   oracle::file_bytes(sidecar_path(p)) == oracle::file_bytes(sidecar_path(p2));
            bad += !same;
        }
    }
    detail = fmt("%.0f volume round trips differ", static_cast<double>(bad));
    return bad == 0;
}

// Criterion 7, pipeline part: every stage with shortened training, run twice into separate trees.
std::map<std::string, std::vector<char>> full_pipeline(const fs::path& out) {
    auto c = acceptance_config();
    c.training.localizer.max_steps = 5;
    c.training.segmenter.max_steps = 5;
    c.segmentation.predictor = PredictorKind::trained;
    const auto ws = Workspace::resolve(c, out);
    cmd_phantom(c, ws);
    cmd_stats(c, ws);
    cmd_train_localizer(c, ws);
    for (const auto& organ : c.corpus.templ.organs) cmd_train_segmenter(c, ws, organ.id);
    cmd_run(c, ws);
    cmd_evaluate(c, ws);
    return oracle::tree_contents(out);
}

Outcome determinism(const fs::path& dir) {
    std::string vol_detail;
    const bool vol_ok = volume_round_trip(dir / "volumes", vol_detail);
    const auto a = full_pipeline(dir / "first");
    const auto b = full_pipeline(dir / "second");
    std::size_t differing = 0;
    for (const auto& [name, bytes] : a) {
        const auto it = b.find(name);
        differing += it == b.end() || it->second != bytes;
    }
    differing += b.size() > a.size() ? b.size() - a.size() : 0;
    return {vol_ok && differing == 0 && !a.empty(),
            vol_detail + fmt(", %.0f of %.0f pipeline artifacts differ between two runs", static_cast<double>(differing),
                             static_cast<double>(a.size()))};
}

double organ_dice(const DiceReport& r, int id) { return r.per_organ.at(id).mean; }

int smallest_organ(const PhantomSpec& spec) {
    int best = 0;
    double best_v = 1e300;
    for (const auto& o : spec.organs) {
        const double v = o.semi_axes_mm[0] * o.semi_axes_mm[1] * o.semi_axes_mm[2];
        if (v < best_v) {
            best_v = v;
            best = o.id;
        }
    }
    return best;
}

}  // namespace

int main() {
    oracle::TempDir dir("acceptance");
    std::printf("acceptance workspace: %s\n", dir.path().string().c_str());

    report("C1", "gradient suites", gradient_suites, 60.0);
    report("C2", "heatmap/centroid closure", centroid_closure, 30.0);
    report("C3", "brute-force oracle equivalence", brute_force);

    const auto config = acceptance_config();
    const auto ws = Workspace::resolve(config, dir.path() / "main");
    cmd_phantom(config, ws);
    cmd_stats(config, ws);

    report(
        "C4", "end-to-end phantom pipeline, oracle predictors",
        [&] {
            auto c = config;
            c.localization.source = LocalizerSource::ground_truth_heatmaps;
            c.segmentation.predictor = PredictorKind::oracle;
            const auto s = cmd_run(c, ws);
            return Outcome{s.volumes == 3 && s.failures.empty() && s.localization_misses == 0 &&
                               s.report.global_mean >= 0.95,
                           fmt("ground-truth heatmaps: %.0f test volumes, global dice %.4f +- %.4f, %.0f misses",
                               static_cast<double>(s.volumes), s.report.global_mean, s.report.global_stddev,
                               static_cast<double>(s.localization_misses + s.failures.size()))};
        },
        300.0);

    TrainingReport loc;
    std::map<int, TrainingReport> seg;
    report("C5", "training smoke", [&] {
        loc = cmd_train_localizer(config, ws);
        bool pass = loc.final_loss <= 0.5 * loc.initial_loss && loc.result.trace.size() <= 200;
        std::string detail = fmt("localizer l2 %.4f -> %.4f in %.0f steps", loc.initial_loss, loc.final_loss,
                                 static_cast<double>(loc.result.trace.size()));
        for (const auto& organ : config.corpus.templ.organs) {
            seg[organ.id] = cmd_train_segmenter(config, ws, organ.id);
            const auto& r = seg[organ.id];
            const double drop = (r.initial_loss - r.final_loss) / std::abs(r.initial_loss);
            pass = pass && drop >= 0.30 && r.result.trace.size() <= 200;
            detail += fmt("; segmenter %.0f loss %.4f -> %.4f (%.0f%% drop)", organ.id, r.initial_loss,
                          r.final_loss, 100.0 * drop);
        }
        // Fixed seed: a second, shorter training run must repeat the first bit for bit.
        auto shortc = config;
        shortc.training.localizer.max_steps = 20;
        shortc.training.segmenter.max_steps = 20;
        const auto ws1 = Workspace::resolve(shortc, dir.path() / "det1");
        const auto ws2 = Workspace::resolve(shortc, dir.path() / "det2");
        bool same = true;
        for (const auto* w : {&ws1, &ws2}) {
            cmd_phantom(shortc, *w);
            cmd_stats(shortc, *w);
            cmd_train_localizer(shortc, *w);
            cmd_train_segmenter(shortc, *w, 3);
        }
        same = oracle::file_bytes(ws1.localizer_checkpoint()) == oracle::file_bytes(ws2.localizer_checkpoint()) &&
               oracle::file_bytes(ws1.segmenter_checkpoint(3)) == oracle::file_bytes(ws2.segmenter_checkpoint(3));
        detail += same ? "; repeat runs identical" : "; repeat runs differ";
        return Outcome{pass && same, detail};
    });

    report("C6", "two-step vs whole-volume baseline", [&] {
        auto c = config;
        c.segmentation.predictor = PredictorKind::trained;
        const auto two_step = cmd_run(c, ws);
        const auto base = cmd_baseline(config, ws);
        const int id = smallest_organ(config.corpus.templ);
        const double a = organ_dice(two_step.report, id);
        const double b = organ_dice(base.report, id);
        // Trained localizer feeding exact segmenters, to separate localization from segmentation quality.
        auto oc = config;
        oc.segmentation.predictor = PredictorKind::oracle;
        const auto located = cmd_run(oc, Workspace::resolve(oc, dir.path() / "main"));
        return Outcome{a >= b, fmt("smallest organ %.0f: two-step dice %.4f, baseline %.4f", id, a, b) +
                                   fmt(" (global %.4f vs %.4f)", two_step.report.global_mean, base.report.global_mean) +
                                   fmt("; trained localizer with oracle segmenters: global dice %.4f, %.0f misses",
                                       located.report.global_mean, static_cast<double>(located.localization_misses))};
    });

    report("C7", "determinism and volume format", [&] { return determinism(dir.path() / "det"); });

    std::printf("%s: %d criteria failed\n", failures == 0 ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL", failures);
    return failures == 0 ? 0 : 1;
}
