#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "helpers.hpp"

using ppgfuse::cli::run;
using testing::slurp;
using testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome call(std::vector<std::string> args)
{
    args.insert(args.begin(), "ppgfuse");
    std::ostringstream out, err;
    const int code = run(args, out, err);
    return {code, out.str(), err.str()};
}

} // namespace

TEST_CASE("synth writes a recording, truth files and a manifest")
{
    TempDir dir;
    const auto r = call({"synth", "--preset", "clean", "--seed", "3", "--duration", "90", "--out", dir / "a"});
    REQUIRE(r.code == 0);
    for (const char* f : {"recording.csv", "truth_hr.csv", "truth_beats.csv", "scenario.ini", "manifest.json"})
        CHECK(fs::exists(fs::path(dir / "a") / f));
    const auto m = nlohmann::json::parse(slurp(dir / "a/manifest.json"));
    CHECK(m["command"] == "synth");
    CHECK(m["seed"] == 3);
    CHECK(m.contains("tool_version"));
    CHECK(m.contains("wall_time_s"));
    CHECK(m["outputs"].size() == 4);

    // Same seed, same bytes.
    REQUIRE(call({"synth", "--preset", "clean", "--seed", "3", "--duration", "90", "--out", dir / "b"}).code == 0);
    CHECK(slurp(dir / "a/recording.csv") == slurp(dir / "b/recording.csv"));

    // The written scenario regenerates the same recording.
    REQUIRE(call({"synth", "--scenario", dir / "a/scenario.ini", "--out", dir / "c"}).code == 0);
    CHECK(slurp(dir / "a/recording.csv") == slurp(dir / "c/recording.csv"));
}

TEST_CASE("synth input errors exit with 2")
{
    TempDir dir;
    const auto missing = call({"synth", "--scenario", dir / "nope.ini", "--out", dir / "x"});
    CHECK(missing.code == 2);
    CHECK(missing.err.find("nope.ini") != std::string::npos);

    {
        std::ofstream f(dir / "bad.ini");
        f << "[scenario]\nduration_s = 60\nhr_profile = 0:250\n[site.head]\n";
    }
    CHECK(call({"synth", "--scenario", dir / "bad.ini", "--out", dir / "x"}).code == 2);
    CHECK(call({"synth", "--preset", "stormy", "--out", dir / "x"}).code == 2);
    CHECK(call({"synth"}).code == 2);
    CHECK(call({"frobnicate"}).code == 2);
    CHECK(call({"--help"}).code == 0);
}

TEST_CASE("hr and template on a synthetic recording")
{
    TempDir dir;
    REQUIRE(call({"synth", "--preset", "clean", "--duration", "120", "--out", dir.path.string()}).code == 0);
    const auto rec = dir / "recording.csv";

    const auto hr = call({"hr", rec, "--sites", "wrist", "--out", dir / "wrist_hr.csv"});
    REQUIRE(hr.code == 0);
    CHECK(slurp(dir / "wrist_hr.csv").rfind("time_s,hr_bpm\n", 0) == 0);
    CHECK(fs::exists(dir / "wrist_hr.csv.manifest.json"));

    CHECK(call({"hr", rec, "--sites", "head,wrist,ankle", "--method", "fusion", "--out", dir / "f.csv"}).code == 0);
    CHECK(call({"hr", rec, "--sites", "head,wrist", "--method", "ica", "--out", dir / "i.csv"}).code == 0);

    const auto unknown = call({"hr", rec, "--sites", "earlobe", "--out", dir / "e.csv"});
    CHECK(unknown.code == 2);
    CHECK(unknown.err.find("head") != std::string::npos);
    CHECK(unknown.err.find("ankle") != std::string::npos);

    const auto gone = call({"hr", dir / "missing.csv", "--sites", "head", "--out", dir / "m.csv"});
    CHECK(gone.code == 2);
    CHECK(gone.err.find("missing.csv") != std::string::npos);
    CHECK(call({"hr", rec, "--sites", "head", "--method", "vibes", "--out", dir / "v.csv"}).code == 2);

    REQUIRE(call({"template", rec, "--site", "head", "--out", dir / "head.tmpl"}).code == 0);
    CHECK(slurp(dir / "head.tmpl").rfind("site head\nn 40\n", 0) == 0);
}

TEST_CASE("eval reports, partial failures and empty input")
{
    TempDir dir;
    REQUIRE(call({"synth", "--preset", "clean", "--duration", "120", "--out", dir / "r1"}).code == 0);
    {
        std::ofstream f(dir / "corrupt.csv");
        f << "time_s,site_1:head\n0,1\n0.0078125,x\n";
    }
    const auto e = call({"eval", dir / "r1/recording.csv", dir / "corrupt.csv", "--out", dir / "rep", "--jobs", "2"});
    REQUIRE(e.code == 0);
    CHECK(e.err.find("warning") != std::string::npos);
    for (const char* f : {"report.csv", "percentiles.csv", "recordings.csv", "manifest.json", "plots/fusion-all.svg"})
        CHECK(fs::exists(fs::path(dir / "rep") / f));
    const auto report = slurp(dir / "rep/report.csv");
    CHECK(report.find("fusion-all,fusion,") != std::string::npos);
    CHECK(report.find("partial") != std::string::npos);

    // A synth manifest works as a recording list.
    const auto listed = call({"eval", "--list", dir / "r1/manifest.json", "--configs", "head,both=fusion:head+wrist",
                              "--out", dir / "rep2"});
    REQUIRE(listed.code == 0);
    CHECK(slurp(dir / "rep2/report.csv").find("both,fusion,head+wrist") != std::string::npos);

    CHECK(call({"eval", "--out", dir / "rep3"}).code == 2);
    {
        std::ofstream f(dir / "empty.txt");
    }
    CHECK(call({"eval", "--list", dir / "empty.txt", "--out", dir / "rep3"}).code == 2);
    CHECK(call({"eval", dir / "r1/recording.csv", "--configs", "x=warp:head", "--out", dir / "rep3"}).code == 2);
}

TEST_CASE("config files are honoured and validated")
{
    TempDir dir;
    REQUIRE(call({"synth", "--preset", "clean", "--duration", "90", "--out", dir.path.string()}).code == 0);
    {
        std::ofstream f(dir / "bad.ini");
        f << "[fusion]\npowre = 6\n";
    }
    const auto bad = call({"hr", dir / "recording.csv", "--sites", "head", "--config", dir / "bad.ini", "--out",
                           dir / "h.csv"});
    CHECK(bad.code == 2);
    CHECK(bad.err.find("powre") != std::string::npos);
    {
        std::ofstream f(dir / "good.ini");
        f << "[fusion]\npower = 4\n";
    }
    CHECK(call({"hr", dir / "recording.csv", "--sites", "head,wrist", "--method", "fusion", "--config", dir / "good.ini",
                "--out", dir / "h.csv"})
              .code == 0);
    CHECK(nlohmann::json::parse(slurp(dir / "h.csv.manifest.json"))["config"] == dir / "good.ini");
}
