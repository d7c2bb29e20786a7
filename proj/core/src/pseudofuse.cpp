#include "dueb/pseudofuse.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dueb/raster.hpp"

namespace dueb {
namespace {

void check_maps(const LabelMap& a, const LabelMap& b, int num_classes) {
  if (num_classes < 2) throw std::invalid_argument("fuse: num_classes must be >= 2");
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w())
    throw std::invalid_argument("fuse: prediction maps differ in shape");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < 0 || a[i] >= num_classes || b[i] < 0 || b[i] >= num_classes)
      throw std::invalid_argument("fuse: class value outside {0.." +
                                  std::to_string(num_classes - 1) + "}");
  }
}

void count_range(const LabelMap& a, const LabelMap& b, std::size_t first, std::size_t last,
                 AgreementMatrix& m) {
  for (std::size_t i = first; i < last; ++i) ++m.at(a[i], b[i]);
}

double ratio(std::int64_t num, std::int64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

std::int64_t AgreementMatrix::total() const {
  std::int64_t s = 0;
  for (auto v : counts_) s += v;
  return s;
}

std::int64_t AgreementMatrix::row_sum(int j) const {
  std::int64_t s = 0;
  for (int k = 0; k < classes_; ++k) s += at(j, k);
  return s;
}

std::int64_t AgreementMatrix::col_sum(int k) const {
  std::int64_t s = 0;
  for (int j = 0; j < classes_; ++j) s += at(j, k);
  return s;
}

std::string AgreementMatrix::str() const {
  std::ostringstream os;
  for (int j = 0; j < classes_; ++j) {
    for (int k = 0; k < classes_; ++k) os << (k ? " " : "") << at(j, k);
    os << '\n';
  }
  return os.str();
}

AgreementMatrix agreement_matrix(const LabelMap& y_cw, const LabelMap& y_pw, int num_classes) {
  check_maps(y_cw, y_pw, num_classes);
  AgreementMatrix m(num_classes);
  count_range(y_cw, y_pw, 0, y_cw.size(), m);
  return m;
}

AgreementMatrix agreement_matrix(const LabelMap& y_cw, const LabelMap& y_pw, int num_classes,
                                 int n) {
  check_maps(y_cw, y_pw, num_classes);
  if (n < 0 || n >= y_cw.n()) throw std::out_of_range("agreement_matrix: sample index");
  AgreementMatrix m(num_classes);
  count_range(y_cw, y_pw, n * y_cw.plane(), (n + 1) * y_cw.plane(), m);
  return m;
}

std::vector<double> disagreement_indicator(const AgreementMatrix& m) {
  std::vector<double> ind(m.num_classes());
  for (int j = 0; j < m.num_classes(); ++j)
    ind[j] = 2.0 - ratio(m.at(j, j), m.row_sum(j)) - ratio(m.at(j, j), m.col_sum(j));
  return ind;
}

PseudoBundle fuse(const LabelMap& y_cw, const LabelMap& y_pw, const Tensor& conf_c,
                  const Tensor& conf_p, int num_classes, FuseScope scope) {
  check_maps(y_cw, y_pw, num_classes);
  for (const Tensor* conf : {&conf_c, &conf_p}) {
    if (conf->n() != y_cw.n() || conf->c() != 1 || conf->h() != y_cw.h() ||
        conf->w() != y_cw.w())
      throw std::invalid_argument("fuse: confidence map must have shape (n, 1, h, w)");
    for (double v : conf->data())
      if (!(v > 0.0 && v <= 1.0)) throw std::invalid_argument("fuse: confidence outside (0, 1]");
  }

  const int N = y_cw.n();
  const std::size_t plane = y_cw.plane();
  PseudoBundle b;
  b.y_inter = LabelMap(N, y_cw.h(), y_cw.w());
  b.y_union = LabelMap(N, y_cw.h(), y_cw.w());
  b.w_u = Tensor({N, 1, y_cw.h(), y_cw.w()});
  b.chose_c.assign(y_cw.size(), 0);

  if (scope == FuseScope::kPerBatch) {
    b.matrices.push_back(agreement_matrix(y_cw, y_pw, num_classes));
  } else {
    for (int n = 0; n < N; ++n) b.matrices.push_back(agreement_matrix(y_cw, y_pw, num_classes, n));
  }
  for (const auto& m : b.matrices) b.indicators.push_back(disagreement_indicator(m));

  const std::int32_t ignore = ignore_label(num_classes);
  for (int n = 0; n < N; ++n) {
    const auto& ind = b.indicators[scope == FuseScope::kPerBatch ? 0 : n];
    for (std::size_t i = n * plane; i < (n + 1) * plane; ++i) {
      const int j = y_cw[i];
      const int k = y_pw[i];
      const double bc = conf_c.data()[i];
      const double bp = conf_p.data()[i];
      if (j == k) {
        b.y_inter[i] = j;
        b.y_union[i] = j;
        b.w_u.data()[i] = 0.5 * (bc + bp);
      } else {
        b.y_inter[i] = ignore;
        const bool conservative = ind[j] >= ind[k];
        b.y_union[i] = conservative ? j : k;
        b.w_u.data()[i] = conservative ? bc : bp;
        b.chose_c[i] = conservative;
      }
    }
  }
  return b;
}

void dump_fusion(const PseudoBundle& bundle, int num_classes, int n,
                 const std::filesystem::path& dir, const std::string& prefix) {
  std::filesystem::create_directories(dir);
  const int h = bundle.y_union.h();
  const int w = bundle.y_union.w();
  Raster inter(w, h, 1), uni(w, h, 1), weight(w, h, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto v = bundle.y_inter.at(n, y, x);
      inter.px(x, y)[0] = v == ignore_label(num_classes) ? 255 : static_cast<std::uint8_t>(v);
      uni.px(x, y)[0] = static_cast<std::uint8_t>(bundle.y_union.at(n, y, x));
      weight.px(x, y)[0] =
          static_cast<std::uint8_t>(std::lround(255.0 * bundle.w_u.at(n, 0, y, x)));
    }
  }
  write_pnm(inter, dir / (prefix + "_inter.pgm"));
  write_pnm(uni, dir / (prefix + "_union.pgm"));
  write_pnm(weight, dir / (prefix + "_weight.pgm"));
  std::ofstream txt(dir / (prefix + "_agreement.txt"));
  const auto& m = bundle.matrices[bundle.matrices.size() == 1 ? 0 : n];
  txt << m.str();
}

}  // namespace dueb
