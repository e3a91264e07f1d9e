#include <cmath>
#include <fstream>

#include "doctest.h"
#include "rareclass/dataset.hpp"
#include "support/surrogate.hpp"

using namespace rareclass;
using rareclass::testing::fresh_dir;

namespace {

void write(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

std::string error_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.what();
    }
    return "";
}

/// Textbook Pearson on complete vectors.
double pearson_oracle(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        syy += y[i] * y[i];
        sxy += x[i] * y[i];
    }
    return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

}  // namespace

TEST_CASE("load_secom parses values, NaN tokens and labels") {
    const auto dir = fresh_dir("load_secom");
    write(dir / "d.data", "1 2 NaN\n4 5 6\n7 NaN 9\n");
    write(dir / "l.data", "-1 \"19/07/2008 11:55:00\"\n1 \"19/07/2008 12:32:00\"\n-1 \"20/07/2008 04:01:00\"\n");
    const Dataset d = load_secom(dir / "d.data", dir / "l.data");
    CHECK(d.rows() == 3);
    CHECK(d.cols() == 3);
    CHECK(d.labels == std::vector<int>{0, 1, 0});
    CHECK(d.features.missing(0, 2));
    CHECK(d.features.missing(2, 1));
    CHECK(d.features.value(1, 1) == 5.0);
    CHECK(d.features.column_ids() == std::vector<std::size_t>{0, 1, 2});
    CHECK_FALSE(d.provenance.empty());
}

TEST_CASE("load_secom errors") {
    const auto dir = fresh_dir("load_secom_errors");
    write(dir / "empty.data", "");
    write(dir / "l1.data", "-1 x\n");
    CHECK(error_of([&] { load_secom(dir / "empty.data", dir / "l1.data"); }).find("empty input") == 0);

    std::string ten, nine;
    for (int i = 0; i < 10; ++i) ten += "1 2\n";
    for (int i = 0; i < 9; ++i) nine += "-1 t\n";
    write(dir / "ten.data", ten);
    write(dir / "nine.data", nine);
    CHECK(error_of([&] { load_secom(dir / "ten.data", dir / "nine.data"); }).find("row-count mismatch") == 0);

    write(dir / "bad.data", "1 abc\n");
    CHECK(error_of([&] { load_secom(dir / "bad.data", dir / "l1.data"); }).find("unparseable numeric token") == 0);
}

TEST_CASE("load_delimited maps the minority label to class 1") {
    const auto dir = fresh_dir("load_delimited");
    write(dir / "a.csv", "f1,y,f2\n1,A,2\n3,A,NA\n5,A,6\n7,B,8\n");
    const Dataset d = load_delimited(dir / "a.csv", "y", ',', {"NA"});
    CHECK(d.labels == std::vector<int>{0, 0, 0, 1});
    CHECK(d.cols() == 2);
    CHECK(d.features.missing(1, 1));

    write(dir / "three.csv", "f,y\n1,A\n2,B\n3,C\n");
    CHECK_THROWS_AS(load_delimited(dir / "three.csv", "y", ',', {}), Error);
    CHECK_THROWS_AS(load_delimited(dir / "a.csv", "nope", ',', {}), Error);

    write(dir / "allmissing.csv", "f1,f2,y\nNA,NA,0\nNA,NA,1\nNA,NA,0\n");
    const Dataset m = load_delimited(dir / "allmissing.csv", "y", ',', {"NA"});
    for (const auto& s : column_stats(m)) CHECK(s.missing_fraction == 1.0);
}

TEST_CASE("column_stats examples") {
    FeatureMatrix x(4, 2);
    for (std::size_t i = 0; i < 4; ++i) x.set(i, 0, 5.0);
    x.set(0, 1, 1.0);
    x.set(1, 1, 2.0);
    x.set(2, 1, 3.0);
    const Dataset d = make_dataset(x, {0, 1, 0, 1});
    const auto stats = column_stats(d);
    CHECK(stats[0].is_constant);
    CHECK(*stats[0].std == 0.0);
    CHECK(*stats[0].skewness == 0.0);
    CHECK(stats[1].missing_fraction == 0.25);
    CHECK(*stats[1].mean == 2.0);
    CHECK(*stats[1].median == 2.0);
    CHECK_FALSE(stats[1].is_constant);
}

TEST_CASE("all-missing column has absent moments and is not constant") {
    FeatureMatrix x(3, 1);
    const auto s = column_stats(make_dataset(x, {0, 1, 0}));
    CHECK(s[0].missing_fraction == 1.0);
    CHECK_FALSE(s[0].is_constant);
    CHECK_FALSE(s[0].mean.has_value());
}

TEST_CASE("skewness matches the population Fisher formula") {
    const std::vector<double> v = {1, 2, 2, 3, 10};
    const auto s = column_stats_of(0, v);
    double m = 0;
    for (double a : v) m += a / 5;
    double m2 = 0, m3 = 0;
    for (double a : v) {
        m2 += (a - m) * (a - m) / 5;
        m3 += (a - m) * (a - m) * (a - m) / 5;
    }
    CHECK(*s.skewness == doctest::Approx(m3 / std::pow(m2, 1.5)).epsilon(1e-12));
    CHECK(*s.std == doctest::Approx(std::sqrt(m2)).epsilon(1e-12));
}

TEST_CASE("pairwise Pearson matches the textbook oracle on 5 points") {
    const std::vector<double> x = {1.0, 2.0, 4.0, 5.0, 8.0};
    const std::vector<double> y = {2.0, 1.5, 5.0, 4.5, 9.0};
    CHECK(*pairwise_pearson(x, y) == doctest::Approx(pearson_oracle(x, y)).epsilon(1e-12));

    // Pairwise-complete rows only.
    const std::vector<double> xm = {1.0, 2.0, kMissing, 4.0, 5.0, 8.0};
    const std::vector<double> ym = {2.0, 1.5, 3.0, 5.0, 4.5, 9.0};
    CHECK(*pairwise_pearson(xm, ym) == doctest::Approx(pearson_oracle(x, y)).epsilon(1e-12));
}

TEST_CASE("correlation matrix: diagonal, negation, absent entries, symmetry") {
    FeatureMatrix x(5, 4);
    const double a[] = {1, 3, 2, 5, 4};
    for (std::size_t i = 0; i < 5; ++i) {
        x.set(i, 0, a[i]);
        x.set(i, 1, -a[i]);
        x.set(i, 2, 7.0);  // zero variance
        x.set(i, 3, a[i] * a[i]);
    }
    const auto c = correlation_matrix(make_dataset(x, {0, 1, 0, 1, 0}));
    CHECK(*c.at(0, 0) == doctest::Approx(1.0));
    CHECK(*c.at(0, 1) == doctest::Approx(-1.0));
    CHECK_FALSE(c.at(0, 2).has_value());
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            if (c.at(i, j)) CHECK(std::abs(*c.at(i, j) - *c.at(j, i)) <= 1e-12);
        }
    }
}

TEST_CASE("dataset CSV round trip preserves cells, ids and synthetic rows") {
    auto d = rareclass::testing::make_surrogate({.rows = 40, .seed = 3});
    d.row_ids[5] = kSyntheticRow;
    const auto dir = fresh_dir("csv_roundtrip");
    write_dataset_csv(d, dir / "d.csv");
    const Dataset back = read_dataset_csv(dir / "d.csv");
    CHECK(back.features == d.features);
    CHECK(back.labels == d.labels);
    CHECK(back.row_ids == d.row_ids);
}

TEST_CASE("column stats do not depend on thread count") {
    const auto d = rareclass::testing::make_surrogate({.rows = 200, .seed = 11});
    set_num_threads(1);
    const auto a = column_stats(d);
    set_num_threads(4);
    const auto b = column_stats(d);
    set_num_threads(0);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].mean == b[i].mean);
        CHECK(a[i].skewness == b[i].skewness);
    }
}
