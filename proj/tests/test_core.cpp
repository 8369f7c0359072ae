#include "fixtures.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <sstream>

using namespace mbpetc;
using Catch::Approx;

TEST_CASE("box containment and inflation") {
    Box b{fixtures::vec({-1.0, 0.0}), fixtures::vec({1.0, 2.0})};
    CHECK(b.contains(fixtures::vec({0.0, 1.0})));
    CHECK(b.contains(fixtures::vec({1.0, 2.0})));
    CHECK_FALSE(b.contains(fixtures::vec({1.1, 1.0})));
    const Box big = b.inflated(1.1);
    CHECK(big.lower[0] == Approx(-1.1));
    CHECK(big.upper[1] == Approx(2.1));
}

TEST_CASE("tensor grid visits corners, last axis fastest") {
    const TensorGrid g(Box{fixtures::vec({0.0, 0.0}), fixtures::vec({1.0, 2.0})}, 3);
    REQUIRE(g.size() == 9);
    CHECK(g.point(0) == fixtures::vec({0.0, 0.0}));
    CHECK(g.point(1) == fixtures::vec({0.0, 1.0}));
    CHECK(g.point(8) == fixtures::vec({1.0, 2.0}));
}

TEST_CASE("spectral norm matches known values") {
    Matrix a(2, 2);
    a << 3.0, 0.0, 0.0, -4.0;
    CHECK(spectral_norm(a) == Approx(4.0));
    Matrix r(2, 2);
    r << 0.0, 1.0, -1.0, 0.0;
    CHECK(spectral_norm(r) == Approx(1.0));
}

TEST_CASE("parallel_reduce is order independent and propagates errors") {
    const double m = parallel_reduce(
        1000, 0.0, [](std::size_t i) { return std::sin(static_cast<double>(i)); },
        [](double a, double b) { return std::max(a, b); });
    double ref = 0.0;
    for (std::size_t i = 0; i < 1000; ++i) ref = std::max(ref, std::sin(static_cast<double>(i)));
    CHECK(m == ref);
    CHECK_THROWS_AS(parallel_reduce(
                        10, 0.0,
                        [](std::size_t i) -> double {
                            if (i == 7) throw InputError("boom");
                            return 0.0;
                        },
                        [](double a, double b) { return a + b; }),
                    InputError);
}

TEST_CASE("key-value parsing") {
    std::istringstream in(
        "# comment\n"
        "a = 1.5\n"
        "; other comment\n"
        "[section one]\n"
        "v = 1, 2 ,3\n"
        "flag = yes\n");
    const KeyValueFile f = parse_key_value(in, "t");
    CHECK(f.root().get_double("a") == 1.5);
    const auto* s = f.section("section one");
    REQUIRE(s);
    CHECK(s->get_vector("v") == fixtures::vec({1.0, 2.0, 3.0}));
    CHECK(s->get_bool_or("flag", false));
    CHECK(s->get_list("v") == std::vector<std::string>{"1", "2", "3"});
}

TEST_CASE("key-value errors carry line numbers") {
    auto line_of = [](const std::string& text) -> std::size_t {
        std::istringstream in(text);
        try {
            const auto f = parse_key_value(in, "spec");
            (void)f.root().get_double("x");
        } catch (const ParseError& e) {
            return e.line;
        }
        return 0;
    };
    CHECK(line_of("a = 1\nnot a pair\n") == 2);
    CHECK(line_of("a = 1\na = 2\n") == 2);
    CHECK(line_of("[s]\n[s]\n") == 2);
    CHECK(line_of("[open\n") == 1);
    CHECK(line_of("\n\nx = abc\n") == 3);
}

TEST_CASE("format_double round-trips") {
    for (double v : {0.1, 1.0 / 3.0, 2.77e-5, -1e300, 0.0}) {
        CHECK(std::strtod(format_double(v).c_str(), nullptr) == v);
    }
}
