#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "oracles.hpp"
#include "pmp/losses.hpp"

using namespace pmp;

namespace {

Tensor cloud_tensor(const PointCloud& c, bool track = false) {
  Tensor t = c.to_tensor();
  if (!track) return t;
  return Tensor::from(t.shape(), t.values(), true);
}

StepTrace make_trace(int step, const Tensor& input, const Tensor& displacement,
                     double radius_scale) {
  StepTrace tr;
  tr.step = step;
  tr.input = input;
  tr.displacement = displacement;
  tr.output = add(input, displacement);
  tr.radius_scale = radius_scale;
  return tr;
}

}  // namespace

TEST_CASE("chamfer of a cloud with itself is zero") {
  Rng rng(1);
  PointCloud c = oracle::random_cloud(12, rng);
  CHECK(chamfer_value(c, c, ChamferNorm::L1) == 0.0);
  CHECK(chamfer_value(c, c, ChamferNorm::L2) == 0.0);
}

TEST_CASE("chamfer single point pair gives 2 in both norms") {
  PointCloud x, y;
  x.points = {{0, 0, 0}};
  y.points = {{1, 0, 0}};
  CHECK(chamfer_value(x, y, ChamferNorm::L1) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(chamfer_value(x, y, ChamferNorm::L2) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(chamfer(x.to_tensor(), y.to_tensor(), ChamferNorm::L1).value() ==
        doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("chamfer matches brute force and is symmetric") {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    int64_t nx = 4 + rng.uniform_int(13);
    int64_t ny = 4 + rng.uniform_int(13);
    PointCloud x = oracle::random_cloud(nx, rng);
    PointCloud y = oracle::random_cloud(ny, rng);
    for (ChamferNorm norm : {ChamferNorm::L1, ChamferNorm::L2}) {
      double got = chamfer_value(x, y, norm);
      double want = oracle::chamfer_brute(x, y, norm == ChamferNorm::L2);
      CHECK(std::abs(got - want) < 1e-12);
      CHECK(chamfer_value(y, x, norm) == got);
      CHECK(chamfer(x.to_tensor(), y.to_tensor(), norm).value() ==
            doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("chamfer rejects empty clouds") {
  PointCloud x, y;
  y.points = {{0, 0, 0}};
  CHECK_THROWS_AS(chamfer_value(x, y, ChamferNorm::L1), std::invalid_argument);
  CHECK_THROWS_AS(chamfer(x.to_tensor(), y.to_tensor(), ChamferNorm::L1),
                  std::invalid_argument);
}

TEST_CASE("chamfer gradients match finite differences") {
  Rng rng(3);
  PointCloud xc = oracle::random_cloud(8, rng);
  PointCloud yc = oracle::random_cloud(8, rng);
  for (ChamferNorm norm : {ChamferNorm::L1, ChamferNorm::L2}) {
    Tensor x = cloud_tensor(xc, true);
    Tensor y = cloud_tensor(yc, true);
    Tensor loss = chamfer(x, y, norm);
    loss.backward();
    for (Tensor* in : {&x, &y}) {
      auto eval = [&]() {
        NoGradGuard ng;
        return chamfer(x, y, norm).value();
      };
      std::vector<double> numeric = oracle::fd_gradient(eval, in->impl()->data);
      const std::vector<double>& analytic = in->grad();
      for (size_t i = 0; i < numeric.size(); ++i)
        CHECK(oracle::rel_err(analytic[i], numeric[i], 1e-5) < 1e-4);
    }
  }
}

TEST_CASE("emd exact on identical clouds is zero") {
  Rng rng(4);
  PointCloud c = oracle::random_cloud(10, rng);
  Assignment a = emd_exact(c, c);
  CHECK(a.total_cost == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("emd exact prefers the straight pairing") {
  PointCloud x, y;
  x.points = {{0, 0, 0}, {1, 0, 0}};
  y.points = {{0.1, 0, 0}, {0.9, 0, 0}};
  Assignment a = emd_exact(x, y);
  CHECK(a.mapping == std::vector<int64_t>{0, 1});
  CHECK(a.total_cost == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("emd exact equals exhaustive permutation minimum at N=8") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    PointCloud x = oracle::random_cloud(8, rng);
    PointCloud y = oracle::random_cloud(8, rng);
    Assignment a = emd_exact(x, y);
    double want = oracle::emd_enumerate(x, y);
    CHECK(a.total_cost == doctest::Approx(want).epsilon(1e-10));
    // reported cost is consistent with the returned mapping
    double recompute = 0;
    for (size_t i = 0; i < 8; ++i)
      recompute += oracle::dist(x.points[i], y.points[static_cast<size_t>(a.mapping[i])]);
    CHECK(a.total_cost == doctest::Approx(recompute / 8.0).epsilon(1e-12));
  }
}

TEST_CASE("emd exact cost is symmetric") {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    PointCloud x = oracle::random_cloud(12, rng);
    PointCloud y = oracle::random_cloud(12, rng);
    CHECK(emd_exact(x, y).total_cost ==
          doctest::Approx(emd_exact(y, x).total_cost).epsilon(1e-10));
  }
}

TEST_CASE("emd contract errors") {
  Rng rng(7);
  PointCloud x = oracle::random_cloud(4, rng);
  PointCloud y = oracle::random_cloud(5, rng);
  CHECK_THROWS_AS(emd_exact(x, y), std::invalid_argument);
  CHECK_THROWS_AS(emd_approx(x, y, 10), std::invalid_argument);
  PointCloud big_x = oracle::random_cloud(513, rng);
  PointCloud big_y = oracle::random_cloud(513, rng);
  CHECK_THROWS_AS(emd_exact(big_x, big_y), std::invalid_argument);
}

TEST_CASE("emd approx is zero on identical clouds") {
  Rng rng(8);
  PointCloud c = oracle::random_cloud(16, rng);
  CHECK(emd_approx(c, c, 5).total_cost == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(emd_approx(c, c, 200).total_cost == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("emd approx stays within 5 percent of exact at N=8") {
  Rng rng(9);
  int hits = 0;
  for (int trial = 0; trial < 100; ++trial) {
    PointCloud x = oracle::random_cloud(8, rng);
    PointCloud y = oracle::random_cloud(8, rng);
    double exact = emd_exact(x, y).total_cost;
    double approx = emd_approx(x, y, 50).total_cost;
    CHECK(approx >= exact - 1e-12);
    if (approx <= exact * 1.05 + 1e-12) ++hits;
  }
  CHECK(hits >= 95);
}

TEST_CASE("emd approx returns a bijection at N=128") {
  Rng rng(10);
  PointCloud x = oracle::random_cloud(128, rng);
  PointCloud y = oracle::random_cloud(128, rng);
  Assignment a = emd_approx(x, y, 50);
  std::set<int64_t> seen(a.mapping.begin(), a.mapping.end());
  CHECK(a.mapping.size() == 128);
  CHECK(seen.size() == 128);
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == 127);
}

TEST_CASE("emd cost expression differentiates the mean mapped distance") {
  Rng rng(11);
  PointCloud xc = oracle::random_cloud(6, rng);
  PointCloud yc = oracle::random_cloud(6, rng);
  Assignment a = emd_exact(xc, yc);
  Tensor x = cloud_tensor(xc, true);
  Tensor y = cloud_tensor(yc, false);
  Tensor cost = emd_cost(x, y, a.mapping);
  CHECK(cost.value() == doctest::Approx(a.total_cost).epsilon(1e-12));
  cost.backward();
  auto eval = [&]() {
    NoGradGuard ng;
    return emd_cost(x, y, a.mapping).value();
  };
  std::vector<double> numeric = oracle::fd_gradient(eval, x.impl()->data);
  for (size_t i = 0; i < numeric.size(); ++i)
    CHECK(oracle::rel_err(x.grad()[i], numeric[i], 1e-5) < 1e-4);
}

TEST_CASE("pmd of zero displacements is zero") {
  Tensor input = Tensor::zeros({4, 3});
  std::vector<StepTrace> traces{make_trace(1, input, Tensor::zeros({4, 3}), 1.0)};
  CHECK(pmd(traces).value() == 0.0);
}

TEST_CASE("pmd of a 3-4-0 displacement is 5") {
  Tensor input = Tensor::zeros({1, 3});
  Tensor d = Tensor::from({1, 3}, {3, 4, 0});
  std::vector<StepTrace> traces{make_trace(1, input, d, 1.0)};
  CHECK(pmd(traces).value() == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("pmd equals independent per-vector summation and ignores order") {
  Rng rng(12);
  std::vector<StepTrace> traces;
  double want = 0;
  for (int k = 1; k <= 3; ++k) {
    std::vector<double> dv(5 * 3);
    for (double& v : dv) v = rng.uniform(-1, 1);
    for (int i = 0; i < 5; ++i)
      want += std::sqrt(dv[i * 3] * dv[i * 3] + dv[i * 3 + 1] * dv[i * 3 + 1] +
                        dv[i * 3 + 2] * dv[i * 3 + 2]);
    traces.push_back(make_trace(k, Tensor::zeros({5, 3}), Tensor::from({5, 3}, dv),
                                std::pow(10.0, 1 - k)));
  }
  CHECK(pmd(traces).value() == doctest::Approx(want).epsilon(1e-12));

  std::vector<StepTrace> reordered{traces[2], traces[0], traces[1]};
  CHECK(pmd(reordered).value() == doctest::Approx(pmd(traces).value()).epsilon(1e-15));

  // permuting points within a step leaves the sum unchanged
  std::vector<double> dv = traces[0].displacement.values();
  std::vector<double> perm(dv.size());
  for (int i = 0; i < 5; ++i)
    for (int cdim = 0; cdim < 3; ++cdim)
      perm[static_cast<size_t>(((i + 2) % 5) * 3 + cdim)] =
          dv[static_cast<size_t>(i * 3 + cdim)];
  std::vector<StepTrace> permuted = traces;
  permuted[0] = make_trace(1, Tensor::zeros({5, 3}), Tensor::from({5, 3}, perm), 1.0);
  CHECK(pmd(permuted).value() == doctest::Approx(pmd(traces).value()).epsilon(1e-12));
}

TEST_CASE("pmd rejects empty traces") {
  std::vector<StepTrace> traces;
  CHECK_THROWS_AS(pmd(traces), std::invalid_argument);
}

TEST_CASE("pmd gradients match finite differences") {
  Rng rng(13);
  std::vector<double> dv(4 * 3);
  for (double& v : dv) v = rng.uniform(0.2, 1.0);  // away from the norm kink at 0
  Tensor d = Tensor::from({4, 3}, dv, true);
  std::vector<StepTrace> traces{make_trace(1, Tensor::zeros({4, 3}), d, 1.0)};
  pmd(traces).backward();
  auto eval = [&]() {
    NoGradGuard ng;
    std::vector<StepTrace> t{make_trace(1, Tensor::zeros({4, 3}), d, 1.0)};
    return pmd(t).value();
  };
  std::vector<double> numeric = oracle::fd_gradient(eval, d.impl()->data);
  for (size_t i = 0; i < numeric.size(); ++i)
    CHECK(oracle::rel_err(d.grad()[i], numeric[i], 1e-5) < 1e-4);
}

TEST_CASE("total loss vanishes when every step already matches the target") {
  Rng rng(14);
  PointCloud target = oracle::random_cloud(6, rng);
  Tensor t = target.to_tensor();
  std::vector<StepTrace> traces;
  for (int k = 1; k <= 3; ++k)
    traces.push_back(make_trace(k, t, Tensor::zeros({6, 3}), std::pow(10.0, 1 - k)));
  CHECK(total_loss(traces, t, 0.01).value() == 0.0);
}

TEST_CASE("total loss with zero pmd weight is the summed chamfer") {
  Rng rng(15);
  PointCloud target = oracle::random_cloud(6, rng);
  Tensor tt = target.to_tensor();
  std::vector<StepTrace> traces;
  double want = 0;
  for (int k = 1; k <= 3; ++k) {
    Tensor input = oracle::random_cloud(6, rng).to_tensor();
    std::vector<double> dv(6 * 3);
    for (double& v : dv) v = rng.uniform(-0.2, 0.2);
    StepTrace tr = make_trace(k, input, Tensor::from({6, 3}, dv), std::pow(10.0, 1 - k));
    want += chamfer_value(tr.output_cloud(), target, ChamferNorm::L1);
    traces.push_back(tr);
  }
  CHECK(total_loss(traces, tt, 0.0).value() == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("total loss composes chamfer plus weighted pmd") {
  Rng rng(16);
  PointCloud target = oracle::random_cloud(6, rng);
  Tensor tt = target.to_tensor();
  std::vector<StepTrace> traces;
  for (int k = 1; k <= 2; ++k) {
    Tensor input = oracle::random_cloud(6, rng).to_tensor();
    std::vector<double> dv(6 * 3);
    for (double& v : dv) v = rng.uniform(-0.3, 0.3);
    traces.push_back(make_trace(k, input, Tensor::from({6, 3}, dv), 1.0));
  }
  double chamfer_sum = 0;
  for (const auto& tr : traces)
    chamfer_sum += chamfer_value(tr.output_cloud(), target, ChamferNorm::L1);
  double want = chamfer_sum + 0.07 * pmd(traces).value();
  CHECK(total_loss(traces, tt, 0.07).value() == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("total loss size mismatch is rejected") {
  Rng rng(17);
  Tensor input = oracle::random_cloud(6, rng).to_tensor();
  std::vector<StepTrace> traces{make_trace(1, input, Tensor::zeros({6, 3}), 1.0)};
  Tensor target = oracle::random_cloud(7, rng).to_tensor();
  CHECK_THROWS_AS(total_loss(traces, target, 0.01), std::invalid_argument);
}

TEST_CASE("total loss gradients match finite differences") {
  Rng rng(18);
  PointCloud target = oracle::random_cloud(5, rng);
  Tensor tt = target.to_tensor();
  std::vector<double> dv(5 * 3);
  for (double& v : dv) v = rng.uniform(0.1, 0.4);
  Tensor d = Tensor::from({5, 3}, dv, true);
  Tensor input = oracle::random_cloud(5, rng).to_tensor();
  auto build = [&]() {
    std::vector<StepTrace> traces{make_trace(1, input, d, 1.0)};
    return total_loss(traces, tt, 0.01);
  };
  build().backward();
  auto eval = [&]() {
    NoGradGuard ng;
    return build().value();
  };
  std::vector<double> numeric = oracle::fd_gradient(eval, d.impl()->data);
  for (size_t i = 0; i < numeric.size(); ++i)
    CHECK(oracle::rel_err(d.grad()[i], numeric[i], 1e-5) < 1e-4);
}

TEST_CASE("total loss optional emd term charges the final output") {
  Rng rng(19);
  PointCloud target = oracle::random_cloud(6, rng);
  Tensor tt = target.to_tensor();
  Tensor input = oracle::random_cloud(6, rng).to_tensor();
  std::vector<double> dv(6 * 3);
  for (double& v : dv) v = rng.uniform(-0.2, 0.2);
  std::vector<StepTrace> traces{make_trace(1, input, Tensor::from({6, 3}, dv), 1.0)};

  double base = total_loss(traces, tt, 0.01).value();
  double with_emd = total_loss(traces, tt, 0.01, 0.5, 50).value();
  Assignment a = emd_approx(traces[0].output_cloud(), target, 50);
  CHECK(with_emd == doctest::Approx(base + 0.5 * a.total_cost).epsilon(1e-10));
}
