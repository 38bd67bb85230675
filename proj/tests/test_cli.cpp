// SPDX-License-Identifier: Apache-2.0
#include "symgrade/checkpoint.hpp"
#include "symgrade/cli.hpp"
#include "symgrade/metrics.hpp"
#include "symgrade/training.hpp"

#include "test_util.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

using namespace symgrade;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string out, err;
};

Outcome run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

std::vector<std::string> generate_args(const fs::path& out, std::size_t n = 60) {
    return {"generate", "--n", std::to_string(n), "--size", "16", "--asymmetry", "0.5",
            "--noise", "0.05", "--seed", "42", "--out", out.string()};
}

std::vector<std::string> train_args(const fs::path& data, const fs::path& out, std::size_t epochs = 2) {
    return {"train", "--data", data.string(), "--out", out.string(), "--epochs", std::to_string(epochs),
            "--batch-size", "16", "--lr", "0.01", "--image-size", "16", "--patch", "4", "--hidden", "8",
            "--embed-dim", "8", "--seed", "3"};
}

} // namespace

TEST_CASE("usage errors") {
    CHECK(run({}).code == cli::kUsage);
    CHECK(run({"frobnicate"}).code == cli::kUsage);
    test::TempDir dir("usage");
    auto args = generate_args(dir / "d");
    args[6] = "1.5";
    CHECK(run(args).code == cli::kUsage);
    CHECK(run({"generate", "--n", "ten", "--out", (dir / "x").string()}).code == cli::kUsage);
}

TEST_CASE("generate is byte-deterministic") {
    test::TempDir dir("gen");
    REQUIRE(run(generate_args(dir / "a")).code == cli::kOk);
    REQUIRE(run(generate_args(dir / "b")).code == cli::kOk);
    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), dir / "a");
        if (rel == "config.json") continue;  // records the output path
        CHECK(slurp(e.path()) == slurp(dir / "b" / rel));
        files += e.path().extension() == ".pgm";
    }
    CHECK(files == 60);
    CHECK(fs::exists(dir / "a" / "manifest.csv"));
    auto ca = nlohmann::json::parse(slurp(dir / "a" / "config.json"));
    auto cb = nlohmann::json::parse(slurp(dir / "b" / "config.json"));
    ca.erase("out");
    cb.erase("out");
    CHECK(ca == cb);
}

TEST_CASE("generate reports unwritable output as I/O error") {
    test::TempDir dir("genio");
    { std::ofstream f(dir / "file"); }
    CHECK(run(generate_args(dir / "file" / "sub")).code == cli::kIoError);
}

TEST_CASE("train, eval and predict") {
    test::TempDir dir("train");
    REQUIRE(run(generate_args(dir / "data")).code == cli::kOk);

    const Outcome t = run(train_args(dir / "data", dir / "run"));
    REQUIRE_MESSAGE(t.code == cli::kOk, t.err);
    for (const char* f : {"config.json", "last.ckpt", "best.ckpt", "log.csv", "report.json", "report.csv",
                          "confusion.csv"})
        CHECK_MESSAGE(fs::exists(dir / "run" / f), f);
    CHECK(read_log_csv(dir / "run" / "log.csv").size() == 2);

    const Outcome e = run({"eval", "--checkpoint", (dir / "run" / "best.ckpt").string(), "--data",
                           (dir / "data").string(), "--out", (dir / "ev").string()});
    REQUIRE_MESSAGE(e.code == cli::kOk, e.err);
    const MetricsReport train_report = read_report(dir / "run" / "report.json", ReportFormat::json);
    const MetricsReport eval_report = read_report(dir / "ev" / "report.json", ReportFormat::json);
    CHECK(eval_report == train_report);

    // Accuracy against the standalone confusion CSV.
    std::ifstream cf(dir / "ev" / "confusion.csv");
    std::string line;
    std::uint64_t trace = 0, total = 0;
    std::size_t row = 0;
    while (std::getline(cf, line)) {
        if (line.empty() || line.find_first_not_of("0123456789,") != std::string::npos) continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t col = 0;
        while (std::getline(ss, cell, ',')) {
            const auto v = std::stoull(cell);
            total += v;
            if (col == row) trace += v;
            ++col;
        }
        ++row;
    }
    CHECK(row == 5);
    CHECK(eval_report.accuracy == double(trace) / double(total));

    const fs::path image = *fs::directory_iterator(dir / "data" / "2");
    const Outcome p = run({"predict", "--checkpoint", (dir / "run" / "best.ckpt").string(), "--image",
                           image.string()});
    REQUIRE_MESSAGE(p.code == cli::kOk, p.err);
    std::stringstream ss(p.out);
    std::vector<std::string> fields;
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    REQUIRE(fields.size() == 7);
    const int idx = std::stoi(fields[0]);
    CHECK(fields[1] == std::string(grade_name(idx)));
    double sum = 0.0, best = -1.0;
    int argmax = -1;
    for (int k = 0; k < 5; ++k) {
        const double v = std::stod(fields[2 + k]);
        sum += v;
        if (v > best) best = v, argmax = k;
    }
    CHECK(std::abs(sum - 1.0) < 1e-6);
    CHECK(argmax == idx);
}

TEST_CASE("train defaults and config precedence") {
    test::TempDir dir("prec");
    REQUIRE(run(generate_args(dir / "data", 30)).code == cli::kOk);
    const Outcome t = run({"train", "--data", (dir / "data").string(), "--out", (dir / "r0").string(),
                           "--epochs", "0", "--image-size", "16"});
    REQUIRE_MESSAGE(t.code == cli::kOk, t.err);
    const auto cfg = nlohmann::json::parse(slurp(dir / "r0" / "config.json"));
    CHECK(cfg.at("lr").get<double>() == 1e-5);
    CHECK(cfg.at("weight-decay").get<double>() == 1e-6);
    CHECK(cfg.at("batch-size").get<int>() == 64);
    CHECK(cfg.at("lambda").get<double>() == 10.0);
    CHECK(fs::exists(dir / "r0" / "report.json"));
    CHECK(read_log_csv(dir / "r0" / "log.csv").empty());

    {
        std::ofstream f(dir / "c.json");
        f << R"({"lambda": 0, "lr": 0.5, "epochs": 0, "image-size": 16})";
    }
    REQUIRE(run({"train", "--data", (dir / "data").string(), "--out", (dir / "r1").string(), "--config",
                 (dir / "c.json").string(), "--lr", "0.25"})
                .code == cli::kOk);
    const auto c1 = nlohmann::json::parse(slurp(dir / "r1" / "config.json"));
    CHECK(c1.at("lambda").get<double>() == 0.0);
    CHECK(c1.at("lr").get<double>() == 0.25);

    {
        std::ofstream f(dir / "bad.json");
        f << R"({"lamda": 0})";
    }
    CHECK(run({"train", "--data", (dir / "data").string(), "--out", (dir / "r2").string(), "--config",
               (dir / "bad.json").string()})
              .code == cli::kUsage);
}

TEST_CASE("resolved config reproduces the run") {
    test::TempDir dir("rerun");
    REQUIRE(run(generate_args(dir / "data", 40)).code == cli::kOk);
    REQUIRE(run(train_args(dir / "data", dir / "a")).code == cli::kOk);
    auto cfg = nlohmann::json::parse(slurp(dir / "a" / "config.json"));
    cfg["out"] = (dir / "b").string();
    {
        std::ofstream f(dir / "again.json");
        f << cfg.dump();
    }
    const Outcome r = run({"train", "--config", (dir / "again.json").string()});
    REQUIRE_MESSAGE(r.code == cli::kOk, r.err);
    for (const char* f : {"log.csv", "last.ckpt", "best.ckpt", "report.json"})
        CHECK_MESSAGE(slurp(dir / "a" / f) == slurp(dir / "b" / f), f);
}

TEST_CASE("checkpoint errors exit 4") {
    test::TempDir dir("ck");
    REQUIRE(run(generate_args(dir / "data", 20)).code == cli::kOk);
    CHECK(run({"eval", "--checkpoint", (dir / "missing.ckpt").string(), "--data", (dir / "data").string(),
               "--out", (dir / "e").string()})
              .code == cli::kCheckpointFormat);
    {
        std::ofstream f(dir / "junk.ckpt");
        f << "not a checkpoint";
    }
    CHECK(run({"eval", "--checkpoint", (dir / "junk.ckpt").string(), "--data", (dir / "data").string(), "--out",
               (dir / "e").string()})
              .code == cli::kCheckpointFormat);
}

TEST_CASE("divergence exits 3 and keeps a finite checkpoint") {
    test::TempDir dir("div");
    REQUIRE(run(generate_args(dir / "data", 40)).code == cli::kOk);
    auto args = train_args(dir / "data", dir / "run", 3);
    const auto lr = std::find(args.begin(), args.end(), "--lr");
    *(lr + 1) = "1e305";
    args.insert(args.end(), {"--weight-decay", "0"});
    const Outcome t = run(args);
    CHECK(t.code == cli::kDivergence);
    REQUIRE(fs::exists(dir / "run" / "last.ckpt"));
    const TrainState st = from_checkpoint(load_checkpoint(dir / "run" / "last.ckpt"));
    CHECK(st.params.all_finite());
}

TEST_CASE("gradcheck command") {
    const Outcome a = run({"gradcheck", "--seed", "7"});
    CHECK(a.code == cli::kOk);
    CHECK(std::count(a.out.begin(), a.out.end(), '\n') >= 5);
    CHECK(a.out.find("FAIL") == std::string::npos);
    const Outcome b = run({"gradcheck", "--seed", "7"});
    CHECK(a.out == b.out);
    CHECK(run({"gradcheck", "--seed", "7", "--inject-fault"}).code == cli::kGradCheckFailed);
}
