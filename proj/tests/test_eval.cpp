#include <doctest.h>

#include <map>
#include <sstream>

#include "invp/data.hpp"
#include "invp/error.hpp"
#include "invp/eval.hpp"
#include "support.hpp"

using namespace invp;
using namespace invp::testing;

namespace {

// Full sort by cosine, votes counted directly, ties by rank sum then class id.
std::vector<int> knn_oracle(const Matrix& train, const std::vector<int>& labels, const Matrix& test, Index K) {
    std::vector<int> out;
    for (Eigen::Index q = 0; q < test.rows(); ++q) {
        std::vector<std::pair<double, Index>> scored;
        const Vector query = test.row(q).transpose();
        for (Eigen::Index j = 0; j < train.rows(); ++j) {
            const Vector row = train.row(j).transpose();
            const double nq = query.norm(), nr = row.norm();
            const double s = nq > 0 && nr > 0 ? query.dot(row) / (nq * nr) : 0.0;
            scored.emplace_back(-s, static_cast<Index>(j));
        }
        std::sort(scored.begin(), scored.end());
        std::map<int, std::pair<Index, Index>> tally;  // class -> (votes, rank sum)
        for (Index r = 0; r < K; ++r) {
            auto& t = tally[labels[scored[r].second]];
            ++t.first;
            t.second += r + 1;
        }
        int best = -1;
        for (const auto& [c, t] : tally) {
            if (best < 0 || t.first > tally[best].first || (t.first == tally[best].first && t.second < tally[best].second)) best = c;
        }
        out.push_back(best);
    }
    return out;
}

Matrix unit_rows(Matrix m) {
    m.rowwise().normalize();
    return m;
}

Matrix points(std::initializer_list<std::pair<double, double>> xy) {
    Matrix m(static_cast<Eigen::Index>(xy.size()), 2);
    Eigen::Index r = 0;
    for (const auto& [x, y] : xy) m.row(r++) << x, y;
    return m;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("knn agrees with the sorting oracle") {
    Index mismatches = 0;
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
        const auto train = gen_gaussian_mixture(3, 20, 4, 1.0, seed);
        const auto test = gen_gaussian_mixture(3, 10, 4, 1.0, seed + 100);
        for (Index K : {1, 4, 7, 20}) {
            const Matrix a = unit_rows(train.inputs), b = unit_rows(test.inputs);
            mismatches += knn_predict(a, *train.labels, b, K) != knn_oracle(a, *train.labels, b, K);
        }
    }
    CHECK(mismatches == 0);
}

TEST_CASE("forced votes and tie breaks") {
    const Matrix train = unit_rows(points({{1, 0}, {0.9, 0.1}, {0, 1}, {0.1, 0.9}}));
    const std::vector<int> labels{0, 0, 1, 1};
    const Matrix test = unit_rows(points({{1, 0.05}, {0.05, 1}}));
    CHECK(knn_classify(train, labels, test, std::vector<int>{0, 1}, 1) == 1.0);
    CHECK(knn_classify(train, labels, test, std::vector<int>{1, 0}, 2) == 0.0);
    // two votes each: the class holding rank 1 wins
    CHECK(knn_predict(train, labels, test, 4) == std::vector<int>{0, 1});
    // equal votes and equal rank sums fall to the smaller class id
    const Matrix same = unit_rows(points({{1, 1}, {1, 1}, {1, 1}, {1, 1}}));
    CHECK(knn_predict(same.topRows(2), std::vector<int>{3, 2}, same.topRows(1), 2) == std::vector<int>{3});
    CHECK(knn_predict(same, std::vector<int>{3, 2, 2, 3}, same.topRows(1), 4) == std::vector<int>{2});
}

TEST_CASE("knn errors") {
    const Matrix train = points({{1, 0}, {0, 1}});
    CHECK_THROWS_AS(knn_predict(train, std::vector<int>{0, 1}, train, 0), ConfigError);
    CHECK_THROWS_AS(knn_predict(train, std::vector<int>{0, 1}, train, 3), ConfigError);
    CHECK_THROWS_AS(knn_predict(train, std::vector<int>{0}, train, 1), ShapeError);
    CHECK_THROWS_AS(knn_predict(train, std::vector<int>{0, 1}, Matrix::Ones(1, 3), 1), ShapeError);
}

TEST_CASE("probe separates separable data") {
    const auto train = gen_gaussian_mixture(3, 100, 8, 8.0, 1);
    const auto test = gen_gaussian_mixture(3, 50, 8, 8.0, 1);
    const auto result = linear_probe(train.inputs, *train.labels, test.inputs, *test.labels);
    CHECK(result.train_accuracy >= 0.99);
    CHECK(result.test_accuracy >= 0.99);
}

TEST_CASE("probe is near chance on shuffled labels") {
    const auto train = gen_gaussian_mixture(2, 200, 8, 0.0, 2);
    const auto test = gen_gaussian_mixture(2, 200, 8, 0.0, 3);
    auto labels = *train.labels;
    std::mt19937_64 rng(4);
    std::shuffle(labels.begin(), labels.end(), rng);
    const auto result = linear_probe(train.inputs, labels, test.inputs, *test.labels);
    CHECK(std::abs(result.test_accuracy - 0.5) < 0.1);
}

TEST_CASE("probe is deterministic") {
    const auto d = gen_gaussian_mixture(3, 40, 5, 2.0, 5);
    const auto a = linear_probe(d.inputs, *d.labels, d.inputs, *d.labels);
    const auto b = linear_probe(d.inputs, *d.labels, d.inputs, *d.labels);
    CHECK(a.train_accuracy == b.train_accuracy);
    CHECK(a.test_accuracy == a.train_accuracy);
    CHECK_THROWS_AS(linear_probe(d.inputs, std::vector<int>(120, 0), d.inputs, std::vector<int>(120, 0)), ConfigError);
}

TEST_CASE("similarity stats on identical features overlap fully") {
    const Matrix same = unit_rows(Matrix::Ones(20, 3));
    std::vector<int> labels(20);
    for (int i = 0; i < 20; ++i) labels[i] = i % 2;
    const auto stats = similarity_stats(same, labels, 3, 50, 0);
    CHECK(stats.anchors_used == 20);
    CHECK(stats.overlap_coefficient == doctest::Approx(1.0));
    CHECK(stats.same_mean == doctest::Approx(1.0));
    CHECK(stats.same_class_sims.size() == 60);
}

TEST_CASE("similarity stats skip small classes and separate clusters") {
    const auto d = gen_gaussian_mixture(2, 30, 6, 10.0, 6);
    const Matrix features = unit_rows(d.inputs);
    auto labels = *d.labels;
    labels[0] = 7;  // a singleton class
    const auto stats = similarity_stats(features, labels, 5, 1500, 0);
    CHECK(stats.anchors_skipped == 1);
    CHECK(stats.anchors_used == 59);
    CHECK(stats.same_mean > stats.cross_mean);
    CHECK(stats.overlap_coefficient < 0.2);
    double mass = 0;
    for (double h : stats.same_hist) mass += h;
    CHECK(mass == doctest::Approx(1.0));
    std::ostringstream out;
    write_similarity_stats(out, stats);
    CHECK(out.str().find("overlap_coefficient") != std::string::npos);
    CHECK_THROWS_AS(similarity_stats(features, labels, 0), ConfigError);
}

TEST_CASE("ablation report") {
    std::vector<StrategyResult> rows{{"knn_baseline", 0.7, 9, 1}, {"invp", 0.8, 9, 1}};
    const auto report = ablation_report(rows);
    CHECK(report.rows.front().strategy == "invp");
    CHECK(report.table.find("1/1") != std::string::npos);
    CHECK(report.json.find("\"accuracy\"") != std::string::npos);

    rows[1].accuracy = 0.7;
    CHECK(ablation_report(rows).table.find("0.00") != std::string::npos);

    CHECK_THROWS_AS(ablation_report({rows[0]}), ComparisonError);
    CHECK_THROWS_AS(ablation_report({rows[0], rows[0]}), ComparisonError);
    auto other_data = rows;
    other_data[1].data_hash = 10;
    CHECK_THROWS_AS(ablation_report(other_data), ComparisonError);
    auto other_seed = rows;
    other_seed[1].seed = 2;
    CHECK_THROWS_AS(ablation_report(other_seed), ComparisonError);
}

}
