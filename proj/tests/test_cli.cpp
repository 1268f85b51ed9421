#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "icecore/cli.hpp"

namespace fs = std::filesystem;
using icecore::cli::run;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "icecore");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("icecore_cli_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path write_file(const fs::path& p, const std::string& text) {
    std::ofstream(p) << text;
    return p;
}

/// Synthetic core: 400 slices with a nonincreasing accumulation trend and a
/// temperature effect.
fs::path synthetic_core(const fs::path& dir) {
    std::ostringstream s;
    s << "depth_m,age_kyrbp,temp_c\n";
    double depth = 0.0;
    for (int i = 0; i <= 400; ++i) {
        const double age = 0.5 * i;
        const double temp = -4.0 + 3.0 * std::sin(i / 17.0) + 0.3 * std::cos(i * 1.7);
        s << depth << ',' << age << ',' << temp << '\n';
        const double rate = (1.0 + 0.05 * temp) * (3.0 * std::exp(-age / 60.0) + 1.0) * (1.0 + 0.05 * std::sin(i * 2.3));
        depth += 0.5 * rate;
    }
    return write_file(dir / "core.csv", s.str());
}

} // namespace

TEST_CASE("fit on a three-row table warns about the tiny sample", "[cli]") {
    const auto dir = scratch("toy");
    const auto csv = write_file(dir / "toy.csv", "depth_m,age_kyrbp,temp_c\n0,0,-1\n1,2,-3\n2,4,-5\n");
    const auto r = invoke({"fit", "--input", csv.string(), "--out-dir", (dir / "out").string()});
    CHECK(r.code == 0);
    CHECK(r.err.find("tiny sample") != std::string::npos);
    const auto fit = nlohmann::json::parse(slurp(dir / "out" / "fit.json"));
    CHECK(fit["n"] == 2);
    CHECK(fs::exists(dir / "out" / "curves.csv"));
    CHECK(fs::exists(dir / "out" / "manifest.json"));
}

TEST_CASE("fit writes the fitted quantities", "[cli]") {
    const auto dir = scratch("fit");
    const auto csv = synthetic_core(dir);
    const auto r = invoke({"fit", "--input", csv.string(), "--out-dir", dir.string(), "--bandwidth", "10"});
    REQUIRE(r.code == 0);
    const auto fit = nlohmann::json::parse(slurp(dir / "fit.json"));
    for (const char* key : {"gamma_tilde", "gamma_hat", "phi_tilde", "sigma2_tilde", "gamma_interval", "iterations",
                            "loss_trace"})
        CHECK(fit.contains(key));
    const double g = fit["gamma_tilde"];
    CHECK(std::abs(g - 0.05) < 0.02);

    std::istringstream curves(slurp(dir / "curves.csv"));
    std::string header;
    std::getline(curves, header);
    CHECK(header == "z,x,log_aar,log_g_step,log_g_smooth,fitted_log_aar,residual");
    int rows = 0;
    for (std::string line; std::getline(curves, line);) ++rows;
    CHECK(rows == 400);

    const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
    CHECK(manifest["command"] == "fit");
    CHECK(manifest["software"]["version"] == icecore::cli::kVersion);
}

TEST_CASE("data problems exit with code 2", "[cli]") {
    const auto dir = scratch("bad");
    const auto csv = write_file(dir / "bad.csv", "depth_m,age_kyrbp,temp_c\n0,0,-1\n1,2,-3\n2,2,-5\n");
    const auto r = invoke({"fit", "--input", csv.string(), "--out-dir", dir.string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("non-increasing age at row 3") != std::string::npos);
    CHECK(invoke({"fit", "--input", (dir / "missing.csv").string(), "--out-dir", dir.string()}).code == 2);
}

TEST_CASE("usage errors exit with code 1", "[cli]") {
    CHECK(invoke({}).code == 1);
    CHECK(invoke({"fit"}).code == 1);
    CHECK(invoke({"frobnicate"}).code == 1);
    CHECK(invoke({"simulate", "--noise-mode", "loud"}).code == 1);
    CHECK(invoke({"simulate", "--h-grid", "10:0:5", "--runs", "2", "--B", "2", "--out-dir",
                  scratch("grid").string()})
              .code == 1);
    CHECK(invoke({"--version"}).code == 0);
}

TEST_CASE("bandwidth grids", "[cli]") {
    using icecore::cli::parse_h_grid;
    CHECK(parse_h_grid("0:120:10").size() == 13);
    CHECK(parse_h_grid("0:120:10").back() == 120.0);
    CHECK(parse_h_grid("0,10,28") == std::vector<double>{0, 10, 28});
    CHECK(parse_h_grid("28") == std::vector<double>{28});
    CHECK_THROWS(parse_h_grid("0:10:0"));
    CHECK_THROWS(parse_h_grid("-5,3"));
    CHECK_THROWS(parse_h_grid("a,b"));
}

TEST_CASE("bootstrap smoke run flags the low replicate count", "[cli]") {
    const auto dir = scratch("boot");
    const auto csv = synthetic_core(dir);
    const auto r = invoke({"bootstrap", "--input", csv.string(), "--out-dir", dir.string(), "--B", "10",
                           "--bandwidth", "10", "--threads", "1"});
    REQUIRE(r.code == 0);
    CHECK(r.err.find("low replicate count") != std::string::npos);
    const auto j = nlohmann::json::parse(slurp(dir / "bootstrap.json"));
    CHECK(j["B"] == 10);
    CHECK(j["ci_gamma"].size() == 2);
    CHECK(j["pointwise_log_g"].size() == 400);
    CHECK(fs::exists(dir / "replicates.csv"));
}

TEST_CASE("simulate smoke run writes every table", "[cli]") {
    const auto dir = scratch("sim");
    const auto r = invoke({"simulate", "--runs", "2", "--B", "2", "--n", "300", "--out-dir", dir.string()});
    REQUIRE(r.code == 0);
    for (const char* f : {"table2.csv", "coverage.csv", "logg_bias_sd.csv", "logg_coverage.csv", "bootstrap_se.csv",
                          "summary.json", "manifest.json"})
        CHECK(fs::exists(dir / f));
    CHECK(r.err.find("coverage estimates are rough") != std::string::npos);
}

TEST_CASE("outputs do not depend on the thread count", "[cli][property]") {
    const auto base = scratch("det");
    const auto csv = synthetic_core(base);
    auto outputs = [&](const std::string& threads) {
        const auto dir = base / ("t" + threads);
        REQUIRE(invoke({"bootstrap", "--input", csv.string(), "--out-dir", (dir / "boot").string(), "--B", "16",
                        "--bandwidth", "10", "--threads", threads})
                    .code == 0);
        REQUIRE(invoke({"simulate", "--runs", "4", "--B", "4", "--n", "300,400", "--h-grid", "0,28", "--out-dir",
                        (dir / "sim").string(), "--threads", threads})
                    .code == 0);
        std::vector<std::string> files;
        for (const char* f : {"boot/bootstrap.json", "boot/replicates.csv", "sim/table2.csv", "sim/coverage.csv",
                              "sim/logg_bias_sd.csv", "sim/logg_coverage.csv", "sim/bootstrap_se.csv",
                              "sim/summary.json"})
            files.push_back(slurp(dir / f));
        return files;
    };
    CHECK(outputs("1") == outputs("4"));
}

TEST_CASE("the installed executable runs", "[cli]") {
    const auto dir = scratch("exe");
    const std::string cmd = std::string(ICECORE_CLI_PATH) + " --version > " + (dir / "v.txt").string();
    REQUIRE(std::system(cmd.c_str()) == 0);
    CHECK(slurp(dir / "v.txt").find(icecore::cli::kVersion) != std::string::npos);
}
