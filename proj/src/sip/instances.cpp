#include <cmath>
#include <stdexcept>

#include "epo/sip/testbed.hpp"

namespace epo::sip {

double AnalyticSip::constraint(const IndexPoint& y, const Eigen::VectorXd& x) const {
  return families.at(static_cast<std::size_t>(y.family)).g(x, y.coords(0));
}

AnalyticSip csip_q() {
  AnalyticSip s;
  s.name = "CSIP-Q";
  s.dim = 2;
  s.f = [](const Eigen::VectorXd& x) { return (x(0) - 2.0) * (x(0) - 2.0) + (x(1) - 2.0) * (x(1) - 2.0); };
  s.grad_f = [](const Eigen::VectorXd& x) {
    Eigen::VectorXd g(2);
    g << 2.0 * (x(0) - 2.0), 2.0 * (x(1) - 2.0);
    return g;
  };
  s.hess_f = [](const Eigen::VectorXd&) { return Eigen::MatrixXd(2.0 * Eigen::MatrixXd::Identity(2, 2)); };

  SipFamily fam;
  fam.name = "x1*y+x2*y^2<=1";
  fam.g = [](const Eigen::VectorXd& x, double y) { return x(0) * y + x(1) * y * y - 1.0; };
  fam.grad_x = [](const Eigen::VectorXd&, double y) {
    Eigen::VectorXd g(2);
    g << y, y * y;
    return g;
  };
  fam.dg_dy = [](const Eigen::VectorXd& x, double y) { return x(0) + 2.0 * x(1) * y; };
  s.families.push_back(std::move(fam));
  s.start = Eigen::VectorXd::Zero(2);
  return s;
}

namespace {

double poly(const Eigen::VectorXd& x, double y) { return x(0) + x(1) * y + x(2) * y * y; }

SipFamily cheb_side(double sign, std::string name) {
  SipFamily fam;
  fam.name = std::move(name);
  fam.g = [sign](const Eigen::VectorXd& x, double y) { return sign * (poly(x, y) - std::exp(y)) - x(3); };
  fam.grad_x = [sign](const Eigen::VectorXd&, double y) {
    Eigen::VectorXd g(4);
    g << sign, sign * y, sign * y * y, -1.0;
    return g;
  };
  fam.dg_dy = [sign](const Eigen::VectorXd& x, double y) { return sign * (x(1) + 2.0 * x(2) * y - std::exp(y)); };
  return fam;
}

}  // namespace

AnalyticSip cheb2() {
  AnalyticSip s;
  s.name = "CHEB-2";
  s.dim = 4;
  s.f = [](const Eigen::VectorXd& x) { return x(3); };
  s.grad_f = [](const Eigen::VectorXd&) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(4);
    g(3) = 1.0;
    return g;
  };
  s.hess_f = [](const Eigen::VectorXd&) { return Eigen::MatrixXd(Eigen::MatrixXd::Zero(4, 4)); };
  s.families.push_back(cheb_side(1.0, "p(y)-e^y<=t"));
  s.families.push_back(cheb_side(-1.0, "e^y-p(y)<=t"));
  s.start = Eigen::VectorXd::Zero(4);
  for (int f = 0; f < 2; ++f) {
    for (double y : {0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0}) s.initial_points.push_back(IndexPoint{f, Eigen::VectorXd::Constant(1, y)});
  }
  return s;
}

std::vector<std::string> instance_names() { return {"CSIP-Q", "CHEB-2"}; }

AnalyticSip instance_by_name(const std::string& name) {
  if (name == "CSIP-Q") return csip_q();
  if (name == "CHEB-2") return cheb2();
  throw std::invalid_argument("unknown SIP instance '" + name + "'");
}

}  // namespace epo::sip
