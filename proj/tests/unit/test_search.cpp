#include <doctest.h>

#include <cmath>
#include <functional>

#include "epo/search/violation_search.hpp"

using namespace epo;
using namespace epo::search;

namespace {

Eigen::VectorXd v2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

Box box2(double x0, double y0, double x1, double y1) { return Box{v2(x0, y0), v2(x1, y1)}; }

class FnModel final : public ViolationModel {
 public:
  using Fn = std::function<double(const Eigen::VectorXd&)>;
  using Grad = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

  FnModel(Box box, Fn g, Grad grad) : box_(std::move(box)), g_(std::move(g)), grad_(std::move(grad)) {}

  const Box& index_box(int) const override { return box_; }
  double violation(const IndexPoint& y) const override { return g_(y.coords); }
  Eigen::VectorXd violation_gradient(const IndexPoint& y) const override { return grad_(y.coords); }

 private:
  Box box_;
  Fn g_;
  Grad grad_;
};

Eigen::VectorXd zero2(const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(2); }

}  // namespace

TEST_CASE("grid coordinates and corners") {
  Box line{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1)};
  const auto g = make_grid(line, 8);
  REQUIRE(g.size() == 8);
  CHECK(g[0](0) == 0.0);
  CHECK(g[1](0) == doctest::Approx(1.0 / 7.0).epsilon(1e-15));
  CHECK(g[2](0) == doctest::Approx(2.0 / 7.0).epsilon(1e-15));
  CHECK(g[7](0) == 1.0);

  const auto sq = make_grid(box2(0, 0, 1, 1), 8);
  CHECK(sq.size() == 64);
  for (auto c : {v2(0, 0), v2(0, 1), v2(1, 0), v2(1, 1)}) {
    CHECK(std::any_of(sq.begin(), sq.end(), [&](const Eigen::VectorXd& p) { return p == c; }));
  }
  CHECK(sq[1] == v2(0.0, 1.0 / 7.0 * 1.0));

  const auto field = make_grid(box2(0, 0, 20, 2), 2);
  REQUIRE(field.size() == 4);
  CHECK(field[0] == v2(0, 0));
  CHECK(field[1] == v2(0, 2));
  CHECK(field[2] == v2(20, 0));
  CHECK(field[3] == v2(20, 2));

  CHECK_THROWS_AS(make_grid(line, 1), std::invalid_argument);
}

TEST_CASE("ladder validation") {
  CHECK(GridLadder().levels() == std::vector<int>{8, 16, 24, 32});
  CHECK_THROWS_AS(GridLadder(std::vector<int>{}), std::invalid_argument);
  CHECK_THROWS_AS(GridLadder(std::vector<int>{8, 8}), std::invalid_argument);
  CHECK_THROWS_AS(GridLadder(std::vector<int>{1, 4}), std::invalid_argument);
}

TEST_CASE("deeply feasible surface: nothing found") {
  FnModel m(box2(0, 0, 1, 1), [](const Eigen::VectorXd&) { return -1.0; }, zero2);
  const SearchOutcome o = search::search(m, GridLadder(), 0.01);
  CHECK_FALSE(o.found);
  CHECK(o.max_violation_seen == -1.0);
  CHECK(o.argmax.coords == v2(0, 0));
}

TEST_CASE("violated corner found at the first level") {
  FnModel m(box2(0, 0, 1, 1), [](const Eigen::VectorXd& y) { return y(0) + y(1) - 1.5; }, zero2);
  const SearchOutcome o = search::search(m, GridLadder(), 0.01);
  REQUIRE(o.found);
  CHECK(o.level == 0);
  CHECK_FALSE(o.refined);
  CHECK(o.point.coords == v2(1, 1));
  CHECK(o.violation == m.violation(o.point));
  CHECK(o.violation > 0.01);
}

TEST_CASE("refinement finds a narrow peak between grid nodes") {
  const double eta = 1e-3;
  const Eigen::VectorXd c = v2(0.5, 0.5);  // at least 1/46 from every node of the 8, 16 and 24 grids
  const double w = 0.008;
  auto bump = [=](const Eigen::VectorXd& y) { return 1.5 * eta * std::exp(-(y - c).squaredNorm() / (2 * w * w)); };
  FnModel m(
      box2(0, 0, 1, 1), [=](const Eigen::VectorXd& y) { return 0.5 * eta + bump(y); },
      [=](const Eigen::VectorXd& y) -> Eigen::VectorXd { return -bump(y) * (y - c) / (w * w); });

  for (int n : {8, 16, 24}) {
    for (const auto& p : make_grid(m.index_box(0), n)) CHECK(m.violation({0, p}) < eta);
  }
  const SearchOutcome o = search::search(m, GridLadder(), eta);
  REQUIRE(o.found);
  CHECK(o.refined);
  CHECK(o.violation > eta);
  CHECK(o.violation == m.violation(o.point));
  CHECK((o.point.coords - c).norm() < w);
}

TEST_CASE("excluded points push the search to the next level") {
  FnModel m(box2(0, 0, 1, 1), [](const Eigen::VectorXd& y) { return y(0) + y(1) - 1.5; }, zero2);
  int calls = 0;
  const SearchOutcome o = search::search(m, GridLadder(), 0.01, {}, [&](const IndexPoint& y) {
    ++calls;
    return y.coords == v2(1, 1);
  });
  // The corner is in every grid, so every level offers it and every level rejects it.
  CHECK_FALSE(o.found);
  CHECK(calls >= 4);
  CHECK(o.max_violation_seen == doctest::Approx(0.5));
}

TEST_CASE("local refine: flat, interior optimum, projected optimum") {
  const Box b = box2(0, 0, 1, 1);
  const Eigen::VectorXd y0 = v2(0.3, 0.6);
  CHECK(local_refine(y0, zero2, [](const Eigen::VectorXd&) { return 0.0; }, b, 0.1) == y0);

  const Eigen::VectorXd star = v2(0.42, 0.37);
  auto value = [&](const Eigen::VectorXd& y) { return 2.0 - (y - star).squaredNorm(); };
  auto grad = [&](const Eigen::VectorXd& y) -> Eigen::VectorXd { return -2.0 * (y - star); };
  RefineOptions opts;
  const Eigen::VectorXd r = local_refine(v2(0.45, 0.33), grad, value, b, 1.0 / 7.0, opts);
  CHECK((r - star).norm() < 1e-4);

  const Eigen::VectorXd outside = v2(1.3, 0.5);
  auto value_out = [&](const Eigen::VectorXd& y) { return 2.0 - (y - outside).squaredNorm(); };
  auto grad_out = [&](const Eigen::VectorXd& y) -> Eigen::VectorXd { return -2.0 * (y - outside); };
  const Eigen::VectorXd p = local_refine(v2(0.8, 0.2), grad_out, value_out, b, 1.0 / 7.0);
  CHECK((p - v2(1.0, 0.5)).norm() < 1e-4);
  CHECK(b.contains(p));
  CHECK(value_out(p) >= value_out(v2(0.8, 0.2)));
}

TEST_CASE("index point helpers") {
  IndexPoint a{0, v2(0.1, 0.2)};
  IndexPoint b{0, v2(0.1, 0.2 + 1e-13)};
  IndexPoint c{1, v2(0.1, 0.2)};
  CHECK(same_point(a, b));
  CHECK_FALSE(same_point(a, c));
  CHECK_FALSE(same_point(a, IndexPoint{0, v2(0.1, 0.2 + 1e-9)}));
}
