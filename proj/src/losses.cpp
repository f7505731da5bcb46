#include "pmp/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace pmp {

namespace {

void check(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

void check_cloud_tensor(const Tensor& t, const char* who) {
  check(t.rank() == 2 && t.cols() == 3 && t.rows() >= 1,
        std::string(who) + ": nonempty [N,3] tensor required, got " + shape_str(t.shape()));
}

// mean of Euclidean (or squared) distances from each row of `from` to its
// nearest row of `to`, as a tape expression with the assignment frozen
Tensor directed_term(const Tensor& from, const Tensor& to, ChamferNorm norm) {
  const auto& fv = from.values();
  const auto& tv = to.values();
  int64_t nf = from.rows(), nt = to.rows();
  std::vector<int64_t> nearest(static_cast<size_t>(nf));
  for (int64_t i = 0; i < nf; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int64_t bj = 0;
    for (int64_t j = 0; j < nt; ++j) {
      double dx = fv[i * 3] - tv[j * 3];
      double dy = fv[i * 3 + 1] - tv[j * 3 + 1];
      double dz = fv[i * 3 + 2] - tv[j * 3 + 2];
      double d = dx * dx + dy * dy + dz * dz;
      if (d < best) {
        best = d;
        bj = j;
      }
    }
    nearest[i] = bj;
  }
  Tensor diff = sub(from, gather_rows(to, std::move(nearest)));
  Tensor d2 = sum_axis(mul(diff, diff), 1);
  Tensor per_point = (norm == ChamferNorm::L1) ? sqrt(d2) : d2;
  return scale(sum_all(per_point), 1.0 / static_cast<double>(nf));
}

std::vector<double> cost_matrix(const PointCloud& x, const PointCloud& y) {
  int64_t n = x.size();
  std::vector<double> c(static_cast<size_t>(n * n));
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < n; ++j)
      c[i * n + j] = std::sqrt(dist2(x.points[i], y.points[j]));
  return c;
}

double mapping_cost(const std::vector<double>& c, const std::vector<int64_t>& mapping) {
  int64_t n = static_cast<int64_t>(mapping.size());
  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) total += c[i * n + mapping[i]];
  return total / static_cast<double>(n);
}

// shortest augmenting path assignment with potentials, O(n^3)
std::vector<int64_t> solve_assignment(const std::vector<double>& cost, int64_t n) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int64_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int64_t i = 1; i <= n; ++i) {
    p[0] = i;
    int64_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      int64_t i0 = p[j0], j1 = 0;
      double delta = inf;
      for (int64_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int64_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int64_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int64_t> row_to_col(static_cast<size_t>(n));
  for (int64_t j = 1; j <= n; ++j)
    if (p[j]) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

void check_emd_inputs(const PointCloud& x, const PointCloud& y, const char* who) {
  check(!x.empty() && !y.empty(), std::string(who) + ": empty cloud");
  check(x.size() == y.size(), std::string(who) + ": clouds must match in size, got " +
                                  std::to_string(x.size()) + " vs " + std::to_string(y.size()));
}

}  // namespace

Tensor chamfer(const Tensor& x, const Tensor& y, ChamferNorm norm) {
  check_cloud_tensor(x, "chamfer");
  check_cloud_tensor(y, "chamfer");
  return add(directed_term(x, y, norm), directed_term(y, x, norm));
}

double chamfer_value(const PointCloud& x, const PointCloud& y, ChamferNorm norm) {
  NoGradGuard ng;
  return chamfer(x.to_tensor(), y.to_tensor(), norm).value();
}

Assignment emd_exact(const PointCloud& x, const PointCloud& y) {
  check_emd_inputs(x, y, "emd_exact");
  check(x.size() <= 512, "emd_exact: capped at 512 points, got " + std::to_string(x.size()));
  int64_t n = x.size();
  std::vector<double> c = cost_matrix(x, y);
  Assignment out;
  out.mapping = solve_assignment(c, n);
  out.total_cost = mapping_cost(c, out.mapping);
  return out;
}

Assignment emd_approx(const PointCloud& x, const PointCloud& y, int64_t iterations) {
  check_emd_inputs(x, y, "emd_approx");
  check(iterations >= 0, "emd_approx: negative iteration count");
  int64_t n = x.size();
  std::vector<double> c = cost_matrix(x, y);
  double max_cost = *std::max_element(c.begin(), c.end());

  std::vector<double> price(static_cast<size_t>(n), 0.0);
  std::vector<int64_t> person_to_obj(static_cast<size_t>(n), -1);
  std::vector<int64_t> obj_to_person(static_cast<size_t>(n), -1);

  double eps = max_cost / 4.0;
  double eps_floor = 1.0 / (4.0 * static_cast<double>(n));
  while (true) {
    std::fill(person_to_obj.begin(), person_to_obj.end(), -1);
    std::fill(obj_to_person.begin(), obj_to_person.end(), -1);
    for (int64_t round = 0; round < iterations; ++round) {
      bool all_assigned = true;
      for (int64_t i = 0; i < n; ++i) {
        if (person_to_obj[i] != -1) continue;
        all_assigned = false;
        // best and runner-up net value of objects for person i
        double best = -std::numeric_limits<double>::infinity();
        double second = -std::numeric_limits<double>::infinity();
        int64_t bj = 0;
        for (int64_t j = 0; j < n; ++j) {
          double val = -c[i * n + j] - price[j];
          if (val > best) {
            second = best;
            best = val;
            bj = j;
          } else if (val > second) {
            second = val;
          }
        }
        if (n == 1) second = best;
        price[bj] += (best - second) + eps;
        if (obj_to_person[bj] != -1) person_to_obj[obj_to_person[bj]] = -1;
        obj_to_person[bj] = i;
        person_to_obj[i] = bj;
      }
      if (all_assigned) break;
    }
    if (eps < eps_floor) break;
    eps /= 4.0;
  }

  // complete any leftovers greedily so the result is always a bijection
  for (int64_t i = 0; i < n; ++i) {
    if (person_to_obj[i] != -1) continue;
    double best = std::numeric_limits<double>::infinity();
    int64_t bj = -1;
    for (int64_t j = 0; j < n; ++j) {
      if (obj_to_person[j] == -1 && c[i * n + j] < best) {
        best = c[i * n + j];
        bj = j;
      }
    }
    person_to_obj[i] = bj;
    obj_to_person[bj] = i;
  }

  Assignment out;
  out.mapping = std::move(person_to_obj);
  out.total_cost = mapping_cost(c, out.mapping);
  return out;
}

Tensor emd_cost(const Tensor& x, const Tensor& y, const std::vector<int64_t>& mapping) {
  check_cloud_tensor(x, "emd_cost");
  check_cloud_tensor(y, "emd_cost");
  check(static_cast<int64_t>(mapping.size()) == x.rows(),
        "emd_cost: mapping length " + std::to_string(mapping.size()) + " vs cloud " +
            shape_str(x.shape()));
  Tensor diff = sub(x, gather_rows(y, mapping));
  Tensor d = sqrt(sum_axis(mul(diff, diff), 1));
  return scale(sum_all(d), 1.0 / static_cast<double>(x.rows()));
}

Tensor pmd(const std::vector<StepTrace>& traces) {
  check(!traces.empty(), "pmd: no traces");
  Tensor total;
  for (const StepTrace& tr : traces) {
    check_cloud_tensor(tr.displacement, "pmd");
    Tensor d = tr.displacement;
    Tensor lengths = sqrt(sum_axis(mul(d, d), 1));
    Tensor s = sum_all(lengths);
    total = total.defined() ? add(total, s) : s;
  }
  return total;
}

Tensor total_loss(const std::vector<StepTrace>& traces, const Tensor& target, double pmd_weight,
                  double emd_weight, int64_t emd_iterations) {
  check(!traces.empty(), "total_loss: no traces");
  check_cloud_tensor(target, "total_loss");
  Tensor loss;
  for (const StepTrace& tr : traces) {
    check(tr.output.rows() == target.rows(),
          "total_loss: step " + std::to_string(tr.step) + " output is " +
              shape_str(tr.output.shape()) + ", target is " + shape_str(target.shape()));
    Tensor cd = chamfer(tr.output, target, ChamferNorm::L1);
    loss = loss.defined() ? add(loss, cd) : cd;
  }
  if (pmd_weight != 0.0) loss = add(loss, scale(pmd(traces), pmd_weight));
  if (emd_weight != 0.0) {
    const Tensor& final_out = traces.back().output;
    Assignment a = emd_approx(PointCloud::from_tensor(final_out),
                              PointCloud::from_tensor(target), emd_iterations);
    loss = add(loss, scale(emd_cost(final_out, target, a.mapping), emd_weight));
  }
  return loss;
}

}  // namespace pmp
