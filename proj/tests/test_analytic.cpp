#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "attnalign/analytic.hpp"
#include "attnalign/errors.hpp"
#include "attnalign/rng.hpp"

using namespace attnalign;

namespace {

// Test-local Monte-Carlo oracle: mean entropy and mean max probability of
// softmaxed N(0, sigma^2) rows, computed with straight-line code independent
// of the library's softmax path.
struct McRowMoments {
    double mean_entropy = 0.0;
    double mean_p_max = 0.0;
    double mean_row_max_logit = 0.0;
};

McRowMoments mc_row_moments(std::size_t length, double sigma, double tau,
                            std::size_t replicates, std::uint64_t seed) {
    McRowMoments out;
    std::vector<double> row(length);
    for (std::size_t r = 0; r < replicates; ++r) {
        Rng rng(derive_seed(seed, r));
        double mx = -1e300;
        for (double& v : row) {
            v = rng.normal(0.0, sigma);
            mx = std::max(mx, v);
        }
        out.mean_row_max_logit += mx;
        double denom = 0.0;
        for (double v : row)
            denom += std::exp((v - mx) / tau);
        double entropy = 0.0, pmax = 0.0;
        for (double v : row) {
            const double p = std::exp((v - mx) / tau) / denom;
            pmax = std::max(pmax, p);
            if (p > 0.0)
                entropy -= p * std::log(p);
        }
        out.mean_entropy += entropy;
        out.mean_p_max += pmax;
    }
    out.mean_entropy /= static_cast<double>(replicates);
    out.mean_p_max /= static_cast<double>(replicates);
    out.mean_row_max_logit /= static_cast<double>(replicates);
    return out;
}

} // namespace

TEST_CASE("normal_quantile") {
    CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(normal_quantile(0.975) == doctest::Approx(1.959963985).epsilon(1e-8));
    CHECK(normal_quantile(0.0013498980316300933) == doctest::Approx(-3.0).epsilon(1e-8));
    for (double p : {0.001, 0.1, 0.3, 0.77, 0.999})
        CHECK(normal_quantile(p) == doctest::Approx(-normal_quantile(1.0 - p)).epsilon(1e-10));
    CHECK_THROWS_AS(normal_quantile(0.0), DomainError);
    CHECK_THROWS_AS(normal_quantile(1.0), DomainError);
}

TEST_CASE("average_logit_vector") {
    SUBCASE("single row is sorted and centered") {
        const std::vector<double> avg = average_logit_vector({{3, 1, 2}});
        REQUIRE(avg.size() == 3);
        CHECK(avg[0] == doctest::Approx(-1.0).epsilon(1e-15));
        CHECK(avg[1] == doctest::Approx(0.0));
        CHECK(avg[2] == doctest::Approx(1.0).epsilon(1e-15));
    }
    SUBCASE("rows sorted before averaging") {
        const std::vector<double> avg = average_logit_vector({{0, 2}, {2, 0}});
        CHECK(avg[0] == doctest::Approx(-1.0).epsilon(1e-15));
        CHECK(avg[1] == doctest::Approx(1.0).epsilon(1e-15));
    }
    SUBCASE("mixed lengths rejected") {
        CHECK_THROWS_AS(average_logit_vector({{1, 2}, {1, 2, 3}}), ShapeError);
    }
    SUBCASE("empty input rejected") {
        CHECK_THROWS_AS(average_logit_vector({}), ShapeError);
    }

    SUBCASE("order-statistics scale matches an independent MC oracle") {
        // implementation path
        const std::size_t len = 512, rows = 10000;
        SortedRowAverager averager(len);
        std::vector<double> row(len);
        for (std::size_t r = 0; r < rows; ++r) {
            Rng rng(derive_seed(424242, r));
            for (double& v : row)
                v = rng.normal();
            averager.add(row);
        }
        const std::vector<double> avg = averager.average();
        double ss = 0.0;
        for (double v : avg)
            ss += v * v;
        const double impl_std = std::sqrt(ss / static_cast<double>(len));

        // independent oracle: fresh draws, local sort+accumulate code
        std::vector<double> acc(len, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
            Rng rng(derive_seed(99991, r));
            for (double& v : row)
                v = rng.normal();
            std::sort(row.begin(), row.end());
            for (std::size_t i = 0; i < len; ++i)
                acc[i] += row[i];
        }
        double mean = 0.0;
        for (double& v : acc) {
            v /= static_cast<double>(rows);
            mean += v;
        }
        mean /= static_cast<double>(len);
        double ss2 = 0.0;
        for (double v : acc)
            ss2 += (v - mean) * (v - mean);
        const double oracle_std = std::sqrt(ss2 / static_cast<double>(len));

        CHECK(impl_std == doctest::Approx(oracle_std).epsilon(0.03));
    }
}

TEST_CASE("fit_gaussian") {
    SUBCASE("three points") {
        const GaussianFit f = fit_gaussian(std::vector<double>{-1, 0, 1});
        CHECK(f.sigma == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-12));
        CHECK(f.l_max == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(f.length == 3);
    }
    SUBCASE("symmetric pair") {
        const GaussianFit f = fit_gaussian(std::vector<double>{-2.5, 2.5});
        CHECK(f.sigma == doctest::Approx(2.5).epsilon(1e-12));
        CHECK(f.l_max == doctest::Approx(2.5).epsilon(1e-12));
    }
    SUBCASE("recovers sigma of a large N(0,4) sample") {
        Rng rng(31);
        std::vector<double> v(4096);
        for (double& x : v)
            x = rng.normal(0.0, 2.0);
        const GaussianFit f = fit_gaussian(v);
        CHECK(f.sigma == doctest::Approx(2.0).epsilon(0.05));
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(fit_gaussian(std::vector<double>{7, 7, 7}), ZeroSigmaError);
        CHECK_THROWS_AS(fit_gaussian(std::vector<double>{1}), ShapeError);
    }
}

TEST_CASE("approx_pmax") {
    SUBCASE("pinned value") {
        const ApproxValue v = approx_pmax(512, 1.0, 4.0, 1.0);
        CHECK(v.value == doctest::Approx(0.064679).epsilon(1e-4));
        CHECK(v.in_model);
    }
    SUBCASE("degenerate single-entry row") {
        const ApproxValue v = approx_pmax(1, 0.0, 0.0, 1.0);
        CHECK(v.value == 1.0);
        CHECK(v.in_model);
    }
    SUBCASE("out-of-range estimates are flagged, not clamped") {
        const ApproxValue v = approx_pmax(1, 0.0, 5.0, 1.0);
        CHECK(v.value == doctest::Approx(std::exp(5.0)).epsilon(1e-12));
        CHECK_FALSE(v.in_model);
    }
    SUBCASE("MC fidelity with the empirical max") {
        const McRowMoments mc = mc_row_moments(4096, 1.0, 1.0, 2000, 8080);
        const ApproxValue v = approx_pmax(4096, 1.0, mc.mean_row_max_logit, 1.0);
        CHECK(std::abs(v.value - mc.mean_p_max) / mc.mean_p_max <= 0.10);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(approx_pmax(0, 1.0, 1.0, 1.0), ShapeError);
        CHECK_THROWS_AS(approx_pmax(8, -1.0, 1.0, 1.0), DomainError);
        CHECK_THROWS_AS(approx_pmax(8, 1.0, 1.0, 0.0), DomainError);
    }
}

TEST_CASE("approx_entropy") {
    SUBCASE("pinned value") {
        const ApproxValue v = approx_entropy(1024, 2.0, 1.0);
        CHECK(v.value == doctest::Approx(std::log(1024.0) - 2.0).epsilon(1e-12));
        CHECK(v.in_model);
    }
    SUBCASE("uniform limit at sigma 0") {
        for (std::size_t len : {2u, 64u, 4096u})
            CHECK(approx_entropy(len, 0.0, 0.7).value ==
                  doctest::Approx(std::log(static_cast<double>(len))).epsilon(1e-15));
    }
    SUBCASE("negative estimates are flagged") {
        const ApproxValue v = approx_entropy(2, 10.0, 0.5);
        CHECK(v.value < 0.0);
        CHECK_FALSE(v.in_model);
    }
    SUBCASE("MC fidelity at L=4096 sigma=1") {
        const McRowMoments mc = mc_row_moments(4096, 1.0, 1.0, 2000, 515);
        const ApproxValue v = approx_entropy(4096, 1.0, 1.0);
        CHECK(std::abs(v.value - mc.mean_entropy) <= 0.05);
    }
}

TEST_CASE("solve_tau_maxprob") {
    SUBCASE("identity collapses to 1") {
        const double tau = solve_tau_maxprob(512, 512, 0.3, 1.0, 1.0);
        CHECK(tau == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("pinned root") {
        const double tau = solve_tau_maxprob(512, 2048, 0.3, 1.0, 1.0);
        CHECK(tau == doctest::Approx(0.759418).epsilon(1e-5));
        // root property: A tau^2 - B tau + C = 0
        const double a = std::log(2048.0) + std::log(0.3);
        const double b = std::log(512.0) + std::log(0.3) + 0.5;
        const double c = 0.5;
        CHECK(std::abs(a * tau * tau - b * tau + c) <= 1e-9);
        // no larger real root: the companion root is not above it
        const double other = c / (a * tau);
        CHECK(other <= tau + 1e-12);
    }
    SUBCASE("negative discriminant raises") {
        CHECK_THROWS_AS(solve_tau_maxprob(512, 2048, 0.3, 2.0, 2.0), NoRealRootError);
    }
    SUBCASE("non-positive leading coefficient raises") {
        // ln(512) + ln(1e-5) < 0
        CHECK_THROWS_AS(solve_tau_maxprob(256, 512, 1e-5, 1.0, 1.0),
                        DegenerateCoefficientError);
    }
    SUBCASE("argument domains") {
        CHECK_THROWS_AS(solve_tau_maxprob(512, 256, 0.3, 1.0, 1.0), DomainError);
        CHECK_THROWS_AS(solve_tau_maxprob(512, 1024, 0.0, 1.0, 1.0), DomainError);
        CHECK_THROWS_AS(solve_tau_maxprob(512, 1024, 1.5, 1.0, 1.0), DomainError);
        CHECK_THROWS_AS(solve_tau_maxprob(512, 1024, 0.3, 0.0, 1.0), DomainError);
    }
}

TEST_CASE("solve_tau_entropy") {
    SUBCASE("identity collapses to 1") {
        CHECK(solve_tau_entropy(512, 512, 3.0, 3.0) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(solve_tau_entropy(64, 64, 0.37, 0.37) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("pinned values") {
        CHECK(solve_tau_entropy(512, 15000, 3.0, 3.0) == doctest::Approx(0.755810).epsilon(1e-5));
        CHECK(solve_tau_entropy(512, 2048, 1.0, 1.0) == doctest::Approx(0.514849).epsilon(1e-5));
    }
    SUBCASE("substituting the root aligns the entropy approximations") {
        for (double sigma_tr : {0.7, 1.0, 1.4}) {
            for (std::size_t l_ex : {1024u, 4096u, 15000u}) {
                const double sigma_ex = sigma_tr * 1.1;
                const double tau = solve_tau_entropy(512, l_ex, sigma_tr, sigma_ex);
                const double h_tr = approx_entropy(512, sigma_tr, 1.0).value;
                const double h_ex = approx_entropy(l_ex, sigma_ex, tau).value;
                REQUIRE(std::abs(h_tr - h_ex) <= 1e-9);
            }
        }
    }
    SUBCASE("monotone in length and sigma") {
        double prev = solve_tau_entropy(512, 600, 1.0, 1.0);
        for (std::size_t l : {1024u, 2048u, 8192u}) {
            const double tau = solve_tau_entropy(512, l, 1.0, 1.0);
            CHECK(tau < prev);
            prev = tau;
        }
        prev = solve_tau_entropy(512, 2048, 1.0, 0.5);
        for (double s : {1.0, 1.5, 2.0}) {
            const double tau = solve_tau_entropy(512, 2048, 1.0, s);
            CHECK(tau > prev);
            prev = tau;
        }
    }
}

TEST_CASE("mc_oracle_expectations") {
    SUBCASE("sigma 1, tau 1") {
        const McExpectationReport rep = mc_oracle_expectations(1.0, 1.0, 1000000, 2024);
        CHECK(rep.exp_tau_closed == doctest::Approx(std::exp(0.5)).epsilon(1e-12));
        CHECK(rep.exp_tau_rel_err <= 0.01);
        CHECK(rep.l_exp_closed == doctest::Approx(std::exp(0.5)).epsilon(1e-12));
        CHECK(rep.l_exp_rel_err <= 0.02);
    }
    SUBCASE("sigma 2, tau 2 scales back to e^0.5") {
        const McExpectationReport rep = mc_oracle_expectations(2.0, 2.0, 1000000, 11);
        CHECK(rep.exp_tau_closed == doctest::Approx(std::exp(0.5)).epsilon(1e-12));
        CHECK(rep.exp_tau_rel_err <= 0.01);
    }
    SUBCASE("sample floor") {
        CHECK_THROWS_AS(mc_oracle_expectations(1.0, 1.0, 999, 0), DomainError);
    }
}

TEST_CASE("qq_check") {
    SUBCASE("gaussian samples are highly linear") {
        Rng rng(55);
        std::vector<double> s(10000);
        for (double& v : s)
            v = rng.normal(1.5, 2.0); // standardization removes loc/scale
        const QQReport rep = qq_check(s);
        CHECK(rep.linearity >= 0.995);
        CHECK(std::is_sorted(rep.points.begin(), rep.points.end()));
    }
    SUBCASE("exact normal quantiles give linearity 1") {
        std::vector<double> s(200);
        for (std::size_t i = 0; i < s.size(); ++i)
            s[i] = normal_quantile((static_cast<double>(i) + 0.5) / 200.0);
        const QQReport rep = qq_check(s);
        CHECK(rep.linearity == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("two-point distribution is visibly less linear") {
        Rng rng(66);
        std::vector<double> gaussian(4000), twopoint(4000);
        for (double& v : gaussian)
            v = rng.normal();
        for (double& v : twopoint)
            v = rng.uniform() < 0.5 ? -1.0 : 1.0;
        CHECK(qq_check(twopoint).linearity < qq_check(gaussian).linearity);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(qq_check(std::vector<double>(100, 3.25)), ZeroSigmaError);
        CHECK_THROWS_AS(qq_check(std::vector<double>{1, 2, 3}), ShapeError);
    }
}

TEST_CASE("temperature_curve") {
    GaussianFit fit_tr;
    fit_tr.sigma = 1.0;
    fit_tr.length = 512;

    SUBCASE("identity row") {
        GaussianFit same = fit_tr;
        const std::vector<TemperatureCurveRow> rows =
            temperature_curve(512, fit_tr, std::vector<GaussianFit>{same}, 0.3);
        REQUIRE(rows.size() == 1);
        REQUIRE(rows[0].tau_prop1.has_value());
        REQUIRE(rows[0].tau_prop2.has_value());
        REQUIRE(rows[0].tau_log.has_value());
        CHECK(*rows[0].tau_prop1 == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(*rows[0].tau_prop2 == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(*rows[0].tau_log == 1.0);
    }

    SUBCASE("log column reproduces the length-only table") {
        const std::size_t grid[] = {1024, 2048, 4096, 8192, 15000};
        const double expected[] = {0.90, 0.82, 0.75, 0.69, 0.65};
        std::vector<GaussianFit> fits;
        for (std::size_t l : grid) {
            GaussianFit f = fit_tr;
            f.length = l;
            fits.push_back(f);
        }
        const std::vector<TemperatureCurveRow> rows = temperature_curve(512, fit_tr, fits, 0.3);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            REQUIRE(rows[i].tau_log.has_value());
            CHECK(*rows[i].tau_log == doctest::Approx(expected[i]).scale(1.0).epsilon(0.005));
        }
    }

    SUBCASE("no-real-root entries are absent, others still fill") {
        std::vector<GaussianFit> fits;
        GaussianFit wide = fit_tr;
        wide.length = 2048;
        wide.sigma = 2.0; // discriminant < 0 for prop 1 at sigma_tr = 2
        fits.push_back(wide);
        GaussianFit tr2 = fit_tr;
        tr2.sigma = 2.0;
        const std::vector<TemperatureCurveRow> rows = temperature_curve(512, tr2, fits, 0.3);
        CHECK_FALSE(rows[0].tau_prop1.has_value());
        CHECK(rows[0].tau_prop2.has_value());
        CHECK(rows[0].tau_log.has_value());
    }

    SUBCASE("columns fall as length grows with non-decreasing sigma") {
        std::vector<GaussianFit> fits;
        double sigma = 1.0;
        for (std::size_t l : {1024u, 2048u, 4096u, 8192u}) {
            GaussianFit f;
            f.length = l;
            f.sigma = sigma;
            fits.push_back(f);
            sigma += 0.0; // constant sigma keeps prop1/prop2 monotone
        }
        const std::vector<TemperatureCurveRow> rows = temperature_curve(512, fit_tr, fits, 0.3);
        for (std::size_t i = 1; i < rows.size(); ++i) {
            REQUIRE(rows[i].tau_prop1.has_value());
            CHECK(*rows[i].tau_prop1 <= *rows[i - 1].tau_prop1 + 1e-12);
            CHECK(*rows[i].tau_prop2 <= *rows[i - 1].tau_prop2 + 1e-12);
            CHECK(*rows[i].tau_log <= *rows[i - 1].tau_log + 1e-12);
        }
        // the entropy strategy sharpens at least as aggressively
        for (const TemperatureCurveRow& r : rows)
            CHECK(*r.tau_prop2 <= *r.tau_prop1 + 1e-12);
    }
}
