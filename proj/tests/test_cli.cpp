#include "fixtures.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code = -1;
    std::string output;
};

Outcome cli(const std::string& args) {
    const std::string cmd = std::string(MBPETC_CLI_PATH) + " " + args + " 2>&1";
    Outcome o;
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p);
    char buf[4096];
    while (const std::size_t n = std::fread(buf, 1, sizeof buf, p)) o.output.append(buf, n);
    const int status = pclose(p);
    o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return o;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::path(MBPETC_TEST_TMP) / ("cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

fs::path write_constants(const fs::path& dir) {
    const fs::path p = dir / "pendulum.constants";
    std::ofstream out(p);
    mbpetc::write_constants(out, fixtures::pendulum_constants());
    return p;
}

}  // namespace

TEST_CASE("cli usage errors exit with 2") {
    CHECK(cli("").code == 2);
    CHECK(cli("frobnicate").code == 2);
    CHECK(cli("run").code == 2);
    CHECK(cli("--help").code == 0);
    const auto missing = cli("run --spec /nonexistent/exp.ini");
    CHECK(missing.code == 2);
    CHECK(missing.output.find("configuration error") != std::string::npos);
}

TEST_CASE("cli reports the line of a bad spec") {
    const fs::path dir = scratch("badspec");
    std::ofstream(dir / "exp.ini") << "[scenario a]\nx0 = 0.1, 0\nhorizon = 1\nbogus = 2\n";
    const auto o = cli("run --spec " + (dir / "exp.ini").string());
    CHECK(o.code == 2);
    CHECK(o.output.find(":4") != std::string::npos);
}

TEST_CASE("cli refuses h above the certified bound without the override") {
    const fs::path dir = scratch("unsafe");
    write_constants(dir);
    std::ofstream(dir / "exp.ini") << "[batch]\nout = out\n[scenario fast]\nconstants = pendulum.constants\n"
                                      "h = 0.0005\nhorizon = 0.005\nx0 = 0.1, 0.0\n";
    const auto refused = cli("run --spec " + (dir / "exp.ini").string());
    CHECK(refused.code == 2);
    CHECK(refused.output.find("sigma-MASP") != std::string::npos);
    const auto forced = cli("run --unsafe-h-override --spec " + (dir / "exp.ini").string());
    CHECK(forced.code == 0);
    CHECK(fs::exists(dir / "out" / "fast.csv"));
}

TEST_CASE("cli certify, run and compare") {
    const fs::path dir = scratch("flow");
    const auto cert = cli("certify pendulum --grid 40 --out " + (dir / "k").string());
    INFO(cert.output);
    REQUIRE(cert.code == 0);
    CHECK(cert.output.find("active term") != std::string::npos);
    REQUIRE(fs::exists(dir / "k" / "pendulum.constants"));

    std::ofstream(dir / "exp.ini") << "[batch]\nout = out\nconstants = k/pendulum.constants\nhorizon = 0.1\n"
                                      "x0 = 0.3, 0.0\nchecks = convergence, level_set, dds\n"
                                      "[scenario euler]\nprediction = euler\n[scenario zoh]\n";
    const auto run = cli("run --spec " + (dir / "exp.ini").string());
    INFO(run.output);
    REQUIRE(run.code == 0);
    const auto cmp = cli("compare " + (dir / "out" / "euler.csv").string() + " " + (dir / "out" / "zoh.csv").string() +
                         " --out " + (dir / "cmp").string());
    CHECK(cmp.code == 0);
    CHECK(cmp.output.find("label,prediction,transmissions") != std::string::npos);
    CHECK(fs::exists(dir / "cmp" / "comparison.csv"));

    const auto bad_model = cli("certify cartpole --out " + (dir / "k").string());
    CHECK(bad_model.code == 2);
}

TEST_CASE("cli runs a single acceptance criterion") {
    const auto o = cli("accept --only A7");
    INFO(o.output);
    CHECK(o.code == 0);
    CHECK(o.output.find("A7 PASS") != std::string::npos);
    CHECK(o.output.find("A2 ") == std::string::npos);
}

TEST_CASE("corrupted constants fail A1 and skip the rest") {
    const fs::path dir = scratch("corrupt");
    const fs::path p = write_constants(dir);
    std::string text;
    {
        std::ifstream in(p);
        text.assign(std::istreambuf_iterator<char>(in), {});
    }
    const auto pos = text.find("h_sigma_masp");
    REQUIRE(pos != std::string::npos);
    text.insert(text.find('=', pos) + 2, "9");
    std::ofstream(p) << text;
    const auto o = cli("accept --constants " + p.string());
    INFO(o.output);
    CHECK(o.code == 1);
    CHECK(o.output.find("A1 FAIL") != std::string::npos);
    for (const auto* id : {"A2", "A3", "A4", "A5", "A6", "A7", "A8"}) {
        CHECK(o.output.find(std::string(id) + " SKIP") != std::string::npos);
    }
}
