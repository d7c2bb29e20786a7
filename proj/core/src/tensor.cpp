#include "dueb/tensor.hpp"

#include <algorithm>

namespace dueb {

std::string to_string(const Shape& s) {
  return "(" + std::to_string(s.n) + ", " + std::to_string(s.c) + ", " +
         std::to_string(s.h) + ", " + std::to_string(s.w) + ")";
}

Tensor slice(const Tensor& src, int i) {
  if (i < 0 || i >= src.n()) throw std::out_of_range("slice: batch index");
  Tensor out({1, src.c(), src.h(), src.w()});
  const auto s = src.sample(i);
  std::copy(s.begin(), s.end(), out.data().begin());
  return out;
}

LabelMap slice(const LabelMap& src, int i) {
  if (i < 0 || i >= src.n()) throw std::out_of_range("slice: batch index");
  LabelMap out(1, src.h(), src.w());
  const auto first = src.data().begin() + static_cast<std::ptrdiff_t>(i * src.plane());
  std::copy(first, first + static_cast<std::ptrdiff_t>(src.plane()),
            out.data().begin());
  return out;
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) return {};
  Shape s = items.front().shape();
  int n = 0;
  for (const auto& t : items) {
    if (t.c() != s.c || t.h() != s.h || t.w() != s.w)
      throw std::invalid_argument("stack: inconsistent shapes " +
                                  to_string(t.shape()) + " vs " + to_string(s));
    n += t.n();
  }
  s.n = n;
  Tensor out(s);
  auto dst = out.data().begin();
  for (const auto& t : items) dst = std::copy(t.data().begin(), t.data().end(), dst);
  return out;
}

LabelMap stack(std::span<const LabelMap> items) {
  if (items.empty()) return {};
  const int h = items.front().h();
  const int w = items.front().w();
  int n = 0;
  for (const auto& m : items) {
    if (m.h() != h || m.w() != w)
      throw std::invalid_argument("stack: inconsistent label map shapes");
    n += m.n();
  }
  LabelMap out(n, h, w);
  auto dst = out.data().begin();
  for (const auto& m : items) dst = std::copy(m.data().begin(), m.data().end(), dst);
  return out;
}

}  // namespace dueb
