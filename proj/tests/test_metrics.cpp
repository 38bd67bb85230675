// SPDX-License-Identifier: Apache-2.0
#include "symgrade/data.hpp"
#include "symgrade/errors.hpp"
#include "symgrade/metrics.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

using namespace symgrade;

namespace {

std::vector<GradeLabel> labels(std::initializer_list<int> v) {
    std::vector<GradeLabel> out;
    for (int x : v) out.emplace_back(x);
    return out;
}

std::vector<GradeLabel> random_labels(std::size_t n, Rng& rng, std::size_t k = 5) {
    std::vector<GradeLabel> out;
    for (std::size_t i = 0; i < n; ++i) out.emplace_back(static_cast<int>(rng.below(k)));
    return out;
}

// Per-class scores straight from the (pred, truth) pairs, no matrix involved.
struct Oracle {
    std::vector<double> p, r, f;
    double accuracy, macro_f1;
};

Oracle brute_force(const std::vector<GradeLabel>& pred, const std::vector<GradeLabel>& truth, int k) {
    Oracle o;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i];
    o.accuracy = double(hits) / double(pred.size());
    double fsum = 0;
    for (int c = 0; c < k; ++c) {
        std::size_t tp = 0, predicted = 0, actual = 0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            tp += pred[i].value() == c && truth[i].value() == c;
            predicted += pred[i].value() == c;
            actual += truth[i].value() == c;
        }
        const double prec = predicted ? double(tp) / double(predicted) : 0.0;
        const double rec = actual ? double(tp) / double(actual) : 0.0;
        const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
        o.p.push_back(prec);
        o.r.push_back(rec);
        o.f.push_back(f1);
        fsum += f1;
    }
    o.macro_f1 = fsum / k;
    return o;
}

} // namespace

TEST_CASE("confusion_matrix examples") {
    const auto t = labels({0, 1, 2, 3, 4, 2});
    const ConfusionMatrix perfect = confusion_matrix(t, t);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) CHECK(perfect.at(i, j) == (i == j ? (i == 2 ? 2u : 1u) : 0u));

    const ConfusionMatrix cm = confusion_matrix(labels({0, 1}), labels({1, 1}), 2);
    CHECK(cm.at(0, 0) == 0);
    CHECK(cm.at(0, 1) == 0);
    CHECK(cm.at(1, 0) == 1);
    CHECK(cm.at(1, 1) == 1);

    CHECK_THROWS_AS(confusion_matrix(labels({0}), labels({0, 1})), ContractError);
}

TEST_CASE("confusion_matrix matches a tally") {
    Rng rng(1);
    const auto p = random_labels(200, rng);
    const auto t = random_labels(200, rng);
    const ConfusionMatrix cm = confusion_matrix(p, t);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
            std::uint64_t n = 0;
            for (std::size_t s = 0; s < 200; ++s) n += t[s].value() == i && p[s].value() == j;
            CHECK(cm.at(i, j) == n);
        }
    CHECK(cm.total() == 200);
}

TEST_CASE("prf_report examples") {
    const auto t = labels({0, 1, 2, 3, 4});
    const MetricsReport d = prf_report(confusion_matrix(t, t));
    CHECK(d.accuracy == 1.0);
    CHECK(d.macro_precision == 1.0);
    CHECK(d.macro_recall == 1.0);
    CHECK(d.macro_f1 == 1.0);
    CHECK(d.degenerate_classes.empty());

    const MetricsReport a = prf_report(confusion_matrix(labels({0, 1, 1}), labels({0, 1, 0})));
    for (int c : {2, 3, 4}) {
        CHECK(a.precision[c] == 0.0);
        CHECK(a.recall[c] == 0.0);
        CHECK(a.f1[c] == 0.0);
    }
    CHECK(a.degenerate_classes == std::vector<int>{2, 3, 4});
    const Oracle o = brute_force(labels({0, 1, 1}), labels({0, 1, 0}), 5);
    CHECK(std::abs(a.macro_f1 - o.macro_f1) <= 1e-12);

    CHECK_THROWS_AS(prf_report(ConfusionMatrix(5)), ContractError);
}

TEST_CASE("prf_report matches brute force on random sets") {
    Rng rng(2);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng.below(60);
        const auto p = random_labels(n, rng);
        const auto t = random_labels(n, rng);
        const MetricsReport r = prf_report(confusion_matrix(p, t));
        const Oracle o = brute_force(p, t, 5);
        CHECK(r.samples == n);
        CHECK(std::abs(r.accuracy - o.accuracy) <= 1e-12);
        CHECK(r.accuracy == double(r.confusion.trace()) / double(r.confusion.total()));
        for (int c = 0; c < 5; ++c) {
            CHECK(std::abs(r.precision[c] - o.p[c]) <= 1e-12);
            CHECK(std::abs(r.recall[c] - o.r[c]) <= 1e-12);
            CHECK(std::abs(r.f1[c] - o.f[c]) <= 1e-12);
        }
        CHECK(std::abs(r.macro_f1 - o.macro_f1) <= 1e-12);
        // Single-label micro scores collapse to accuracy.
        CHECK(std::abs(r.micro_f1 - o.accuracy) <= 1e-12);
    }
}

TEST_CASE("macro F1 is invariant under class relabelling") {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const auto p = random_labels(40, rng);
        const auto t = random_labels(40, rng);
        std::vector<std::size_t> perm{0, 1, 2, 3, 4};
        rng.shuffle(perm);
        std::vector<GradeLabel> pp, tt;
        for (std::size_t i = 0; i < 40; ++i) {
            pp.emplace_back(static_cast<int>(perm[p[i].value()]));
            tt.emplace_back(static_cast<int>(perm[t[i].value()]));
        }
        CHECK(std::abs(prf_report(confusion_matrix(p, t)).macro_f1 - prf_report(confusion_matrix(pp, tt)).macro_f1) <=
              1e-12);
    }
}

TEST_CASE("report round trip") {
    test::TempDir dir("report");
    Rng rng(4);
    MetricsReport r = prf_report(confusion_matrix(random_labels(77, rng), random_labels(77, rng)));
    r.flip_consistency_rate = 1.0 / 3.0;
    for (auto fmt : {ReportFormat::json, ReportFormat::csv}) {
        const auto path = dir / (fmt == ReportFormat::json ? "r.json" : "r.csv");
        emit_report(r, path, fmt);
        const MetricsReport back = read_report(path, fmt);
        CHECK(back == r);
        CHECK(back.accuracy == double(back.confusion.trace()) / double(back.confusion.total()));
    }

    std::ifstream f(dir / "r.csv");
    std::string line;
    bool in_confusion = false;
    std::size_t rows = 0;
    while (std::getline(f, line)) {
        if (line == "confusion") {
            in_confusion = true;
            continue;
        }
        if (!in_confusion || line.empty()) continue;
        ++rows;
        CHECK(std::count(line.begin(), line.end(), ',') == 4);
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) CHECK(cell.find_first_not_of("0123456789") == std::string::npos);
    }
    CHECK(rows == 5);

    CHECK_THROWS_AS(emit_report(r, dir / "no" / "such" / "dir" / "r.json", ReportFormat::json), IoError);
}

TEST_CASE("flip consistency rate") {
    ModelConfig cfg;
    cfg.image_h = cfg.image_w = 16;
    cfg.patch = 4;
    const ModelParams p = ModelParams::init(cfg, default_descriptions(), 1);

    SyntheticSpec spec;
    spec.n = 30;
    spec.height = spec.width = 16;
    spec.asymmetry = 0.0;
    CHECK(flip_consistency_rate(p, make_batch(generate_synthetic(spec))) == 1.0);

    // Zeroing the image branch makes the model constant in its input.
    ModelParams constant = p;
    for (double& v : constant.patch_w.data()) v = 0.0;
    for (double& v : constant.hidden_w.data()) v = 0.0;
    for (std::size_t i = 0; i < constant.hidden_b.size(); ++i) constant.hidden_b[i] = 0.1 * double(i + 1);
    spec.asymmetry = 1.0;
    const Batch b = make_batch(generate_synthetic(spec));
    CHECK(flip_consistency_rate(constant, b) == 1.0);

    const MetricsReport r = evaluate(p, b, 7);
    const MetricsReport whole = evaluate(p, b);
    CHECK(r == whole);
    CHECK(r.samples == 30);
}
