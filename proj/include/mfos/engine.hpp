#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mfos/errors.hpp"
#include "mfos/parallel.hpp"

// Minimal dense-array engine with reverse-mode differentiation. Tensors are
// contiguous row-major; reshapes (including the batch/sequence packings) are
// views that never copy or reorder data. Forward storage allocations are
// counted so tests can assert the zero-copy property of the packed paths.
namespace mfos::engine {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string r = "[";
  for (size_t i = 0; i < s.size(); ++i) r += (i ? "," : "") + std::to_string(s[i]);
  return r + "]";
}

inline void require_shape(bool cond, const std::string& msg) {
  if (!cond) fail(ErrorKind::ShapeMismatch, msg);
}

// ---------------------------------------------------------------------------
// Allocation accounting (forward storage only; gradient buffers excluded).

struct AllocStats {
  static int64_t count();
  static int64_t bytes();
  static void note(int64_t bytes);
  // Size recording for tests inspecting individual allocations.
  static void start_recording();
  static std::vector<int64_t> stop_recording();
};

// Autograd recording switch (thread-local). Inference runs under NoGradGuard.
bool grad_enabled();
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  bool prev;
};

namespace detail {

template <typename T>
std::shared_ptr<std::vector<T>> alloc_storage(int64_t n) {
  AllocStats::note(n * int64_t(sizeof(T)));
  return std::make_shared<std::vector<T>>(size_t(n), T(0));
}

template <typename T>
struct Node {
  Shape shape;
  std::shared_ptr<std::vector<T>> storage;
  bool requires_grad = false;
  std::vector<T> grad;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> backward_fn;

  T* data() { return storage->data(); }
  const T* data() const { return storage->data(); }
  int64_t numel() const { return shape_numel(shape); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(size_t(numel()), T(0));
  }
};

}  // namespace detail

template <typename T>
class Tensor {
 public:
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;
  explicit Tensor(NodePtr n) : n_(std::move(n)) {}

  static Tensor zeros(const Shape& shape) {
    auto n = std::make_shared<detail::Node<T>>();
    n->shape = shape;
    n->storage = detail::alloc_storage<T>(shape_numel(shape));
    return Tensor(n);
  }

  static Tensor constant(const Shape& shape, T value) {
    Tensor t = zeros(shape);
    std::fill(t.n_->storage->begin(), t.n_->storage->end(), value);
    return t;
  }

  static Tensor from_vector(const Shape& shape, std::vector<T> values, bool requires_grad = false) {
    require_shape(int64_t(values.size()) == shape_numel(shape), "from_vector: size mismatch");
    auto n = std::make_shared<detail::Node<T>>();
    n->shape = shape;
    AllocStats::note(int64_t(values.size() * sizeof(T)));
    n->storage = std::make_shared<std::vector<T>>(std::move(values));
    n->requires_grad = requires_grad;
    return Tensor(n);
  }

  bool defined() const { return bool(n_); }
  const Shape& shape() const { return n_->shape; }
  int64_t numel() const { return n_->numel(); }
  int64_t dim(int i) const { return n_->shape[size_t(i)]; }
  int rank() const { return int(n_->shape.size()); }

  const T* data() const { return n_->data(); }
  // In-place mutation is only meaningful for leaves (parameters, inputs).
  T* mutable_data() { return n_->data(); }

  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool v) {
    require_shape(n_->parents.empty(), "set_requires_grad on non-leaf");
    n_->requires_grad = v;
  }

  const std::vector<T>& grad() const { return n_->grad; }
  bool has_grad() const { return !n_->grad.empty(); }
  void zero_grad() { n_->grad.clear(); }

  T item() const {
    require_shape(numel() == 1, "item() on non-scalar");
    return n_->data()[0];
  }

  std::vector<T> to_vector() const { return *n_->storage; }
  const std::shared_ptr<std::vector<T>>& storage() const { return n_->storage; }
  NodePtr node() const { return n_; }

 private:
  NodePtr n_;
};

namespace detail {

template <typename T>
Tensor<T> new_op(const Shape& shape, std::vector<Tensor<T>> parents,
                 std::function<void(Node<T>&)> backward) {
  Tensor<T> out = Tensor<T>::zeros(shape);
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& p : parents) needs = needs || p.requires_grad();
  }
  if (needs) {
    auto n = out.node();
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(backward);
  }
  return out;
}

// View node: shares parent storage, never allocates.
template <typename T>
Tensor<T> new_view(const Shape& shape, const Tensor<T>& parent) {
  auto n = std::make_shared<Node<T>>();
  n->shape = shape;
  n->storage = parent.storage();
  if (grad_enabled() && parent.requires_grad()) {
    n->requires_grad = true;
    n->parents = {parent.node()};
    n->backward_fn = [](Node<T>& self) {
      auto& p = *self.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      const int64_t n_el = self.numel();
      for (int64_t i = 0; i < n_el; ++i) p.grad[size_t(i)] += self.grad[size_t(i)];
    };
  }
  return Tensor<T>(n);
}

template <typename T>
void accumulate(Node<T>& dst, const T* src, int64_t n) {
  dst.ensure_grad();
  for (int64_t i = 0; i < n; ++i) dst.grad[size_t(i)] += src[i];
}

// Matmul kernels. All accumulate into C so they serve both forward (fresh
// zeroed storage) and gradient accumulation. Loop order keeps the inner loop
// contiguous; each output row is owned by one thread, so results are bitwise
// independent of the thread count.
template <typename T>
void mm_nn(const T* A, const T* B, T* C, int64_t M, int64_t K, int64_t N) {
  parallel_for(M, [&](int64_t r0, int64_t r1) {
    for (int64_t i = r0; i < r1; ++i) {
      const T* a = A + i * K;
      T* c = C + i * N;
      for (int64_t k = 0; k < K; ++k) {
        T av = a[k];
        const T* b = B + k * N;
        for (int64_t j = 0; j < N; ++j) c[j] += av * b[j];
      }
    }
  });
}

// C[M,N] += A[M,K] * B^T with B stored [N,K]
template <typename T>
void mm_nt(const T* A, const T* B, T* C, int64_t M, int64_t K, int64_t N) {
  parallel_for(M, [&](int64_t r0, int64_t r1) {
    for (int64_t i = r0; i < r1; ++i) {
      const T* a = A + i * K;
      T* c = C + i * N;
      for (int64_t j = 0; j < N; ++j) {
        const T* b = B + j * K;
        T acc = 0;
        for (int64_t k = 0; k < K; ++k) acc += a[k] * b[k];
        c[j] += acc;
      }
    }
  });
}

// C[K,N] += A^T * B with A stored [M,K], B stored [M,N]
template <typename T>
void mm_tn(const T* A, const T* B, T* C, int64_t M, int64_t K, int64_t N) {
  parallel_for(K, [&](int64_t k0, int64_t k1) {
    for (int64_t i = 0; i < M; ++i) {
      const T* a = A + i * K;
      const T* b = B + i * N;
      for (int64_t k = k0; k < k1; ++k) {
        T av = a[k];
        T* c = C + k * N;
        for (int64_t j = 0; j < N; ++j) c[j] += av * b[j];
      }
    }
  });
}

// Batched variants flatten (batch, row) into one parallel loop; per-row
// arithmetic is identical to the unbatched kernels, so results match them
// bitwise.
template <typename T>
void bmm_nn(const T* A, const T* B, T* C, int64_t batch, int64_t M, int64_t K, int64_t N) {
  parallel_for(batch * M, [&](int64_t r0, int64_t r1) {
    for (int64_t r = r0; r < r1; ++r) {
      int64_t n = r / M, i = r % M;
      const T* a = A + (n * M + i) * K;
      const T* b = B + n * K * N;
      T* c = C + (n * M + i) * N;
      for (int64_t k = 0; k < K; ++k) {
        T av = a[k];
        const T* bk = b + k * N;
        for (int64_t j = 0; j < N; ++j) c[j] += av * bk[j];
      }
    }
  });
}

template <typename T>
void bmm_nt(const T* A, const T* B, T* C, int64_t batch, int64_t M, int64_t K, int64_t N) {
  parallel_for(batch * M, [&](int64_t r0, int64_t r1) {
    for (int64_t r = r0; r < r1; ++r) {
      int64_t n = r / M, i = r % M;
      const T* a = A + (n * M + i) * K;
      const T* bb = B + n * N * K;
      T* c = C + (n * M + i) * N;
      for (int64_t j = 0; j < N; ++j) {
        const T* b = bb + j * K;
        T acc = 0;
        for (int64_t k = 0; k < K; ++k) acc += a[k] * b[k];
        c[j] += acc;
      }
    }
  });
}

template <typename T>
void bmm_tn(const T* A, const T* B, T* C, int64_t batch, int64_t M, int64_t K, int64_t N) {
  parallel_for(batch * K, [&](int64_t r0, int64_t r1) {
    for (int64_t r = r0; r < r1; ++r) {
      int64_t n = r / K, k = r % K;
      const T* ab = A + n * M * K;
      const T* bb = B + n * M * N;
      T* c = C + (n * K + k) * N;
      for (int64_t i = 0; i < M; ++i) {
        T av = ab[i * K + k];
        const T* b = bb + i * N;
        for (int64_t j = 0; j < N; ++j) c[j] += av * b[j];
      }
    }
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and reduction ops.

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_shape(a.shape() == b.shape(), "add: shape mismatch");
  Tensor<T> out = detail::new_op<T>(
      a.shape(), {a, b}, [](detail::Node<T>& self) {
        for (int p = 0; p < 2; ++p) {
          auto& par = *self.parents[size_t(p)];
          if (par.requires_grad) detail::accumulate(par, self.grad.data(), self.numel());
        }
      });
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.mutable_data();
  for (int64_t i = 0, n = out.numel(); i < n; ++i) po[i] = pa[i] + pb[i];
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_shape(a.shape() == b.shape(), "sub: shape mismatch");
  Tensor<T> out = detail::new_op<T>(
      a.shape(), {a, b}, [](detail::Node<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        int64_t n = self.numel();
        if (pa.requires_grad) detail::accumulate(pa, self.grad.data(), n);
        if (pb.requires_grad) {
          pb.ensure_grad();
          for (int64_t i = 0; i < n; ++i) pb.grad[size_t(i)] -= self.grad[size_t(i)];
        }
      });
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.mutable_data();
  for (int64_t i = 0, n = out.numel(); i < n; ++i) po[i] = pa[i] - pb[i];
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_shape(a.shape() == b.shape(), "mul: shape mismatch");
  Tensor<T> out = detail::new_op<T>(
      a.shape(), {a, b}, [](detail::Node<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        int64_t n = self.numel();
        if (pa.requires_grad) {
          pa.ensure_grad();
          const T* vb = pb.data();
          for (int64_t i = 0; i < n; ++i) pa.grad[size_t(i)] += self.grad[size_t(i)] * vb[i];
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          const T* va = pa.data();
          for (int64_t i = 0; i < n; ++i) pb.grad[size_t(i)] += self.grad[size_t(i)] * va[i];
        }
      });
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.mutable_data();
  for (int64_t i = 0, n = out.numel(); i < n; ++i) po[i] = pa[i] * pb[i];
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  Tensor<T> out = detail::new_op<T>(
      a.shape(), {a}, [c](detail::Node<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int64_t i = 0, n = self.numel(); i < n; ++i) p.grad[size_t(i)] += c * self.grad[size_t(i)];
      });
  const T* pa = a.data();
  T* po = out.mutable_data();
  for (int64_t i = 0, n = out.numel(); i < n; ++i) po[i] = c * pa[i];
  return out;
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
  Tensor<T> out = detail::new_op<T>(
      a.shape(), {a}, [](detail::Node<T>& self) {
        auto& p = *self.parents[0];
        if (p.requires_grad) detail::accumulate(p, self.grad.data(), self.numel());
      });
  const T* pa = a.data();
  T* po = out.mutable_data();
  for (int64_t i = 0, n = out.numel(); i < n; ++i) po[i] = pa[i] + c;
  return out;
}

template <typename T>
Tensor<T> exp_t(const Tensor<T>& a) {
  Tensor<T> out = detail::new_op<T>(
      a.shape(), {a}, [](detail::Node<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        const T* y = self.data();
        for (int64_t i = 0, n = self.numel(); i < n; ++i) p.grad[size_t(i)] += self.grad[size_t(i)] * y[i];
      });
  const T* pa = a.data();
  T* po = out.mutable_data();
  for (int64_t i = 0, n = out.numel(); i < n; ++i) po[i] = std::exp(pa[i]);
  return out;
}

template <typename T>
Tensor<T> log_t(const Tensor<T>& a) {
  Tensor<T> out = detail::new_op<T>(
      a.shape(), {a}, [](detail::Node<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        const T* x = p.data();
        for (int64_t i = 0, n = self.numel(); i < n; ++i) p.grad[size_t(i)] += self.grad[size_t(i)] / x[i];
      });
  const T* pa = a.data();
  T* po = out.mutable_data();
  for (int64_t i = 0, n = out.numel(); i < n; ++i) po[i] = std::log(pa[i]);
  return out;
}

template <typename T>
Tensor<T> clamp_t(const Tensor<T>& a, T lo, T hi) {
  Tensor<T> out = detail::new_op<T>(
      a.shape(), {a}, [lo, hi](detail::Node<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        const T* x = p.data();
        for (int64_t i = 0, n = self.numel(); i < n; ++i) {
          if (x[i] > lo && x[i] < hi) p.grad[size_t(i)] += self.grad[size_t(i)];
        }
      });
  const T* pa = a.data();
  T* po = out.mutable_data();
  for (int64_t i = 0, n = out.numel(); i < n; ++i) po[i] = std::clamp(pa[i], lo, hi);
  return out;
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  Tensor<T> out = detail::new_op<T>(
      a.shape(), {a}, [](detail::Node<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        const T* x = p.data();
        const T inv_sqrt2 = T(M_SQRT1_2);
        const T inv_sqrt2pi = T(0.3989422804014326779);
        for (int64_t i = 0, n = self.numel(); i < n; ++i) {
          T cdf = T(0.5) * (T(1) + std::erf(x[i] * inv_sqrt2));
          T pdf = inv_sqrt2pi * std::exp(T(-0.5) * x[i] * x[i]);
          p.grad[size_t(i)] += self.grad[size_t(i)] * (cdf + x[i] * pdf);
        }
      });
  const T* pa = a.data();
  T* po = out.mutable_data();
  const T inv_sqrt2 = T(M_SQRT1_2);
  for (int64_t i = 0, n = out.numel(); i < n; ++i)
    po[i] = T(0.5) * pa[i] * (T(1) + std::erf(pa[i] * inv_sqrt2));
  return out;
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
  Tensor<T> out = detail::new_op<T>(
      Shape{1}, {a}, [](detail::Node<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        T g = self.grad[0];
        for (auto& gv : p.grad) gv += g;
      });
  const T* pa = a.data();
  T acc = 0;
  for (int64_t i = 0, n = a.numel(); i < n; ++i) acc += pa[i];
  out.mutable_data()[0] = acc;
  return out;
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a) {
  const int64_t n = a.numel();
  Tensor<T> out = detail::new_op<T>(
      Shape{1}, {a}, [n](detail::Node<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        T g = self.grad[0] / T(n);
        for (auto& gv : p.grad) gv += g;
      });
  const T* pa = a.data();
  T acc = 0;
  for (int64_t i = 0; i < n; ++i) acc += pa[i];
  out.mutable_data()[0] = acc / T(n);
  return out;
}

// L2 norm over the trailing dimension; gradient uses x / max(norm, 1e-12).
template <typename T>
Tensor<T> euclid_norm_lastdim(const Tensor<T>& a) {
  require_shape(a.rank() >= 1, "euclid_norm_lastdim: rank 0");
  const int64_t c = a.dim(a.rank() - 1);
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  if (out_shape.empty()) out_shape = {1};
  const int64_t rows = shape_numel(out_shape);
  Tensor<T> out = detail::new_op<T>(
      out_shape, {a}, [c, rows](detail::Node<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        const T* x = p.data();
        const T* n = self.data();
        for (int64_t r = 0; r < rows; ++r) {
          T denom = std::max(n[r], T(1e-12));
          T g = self.grad[size_t(r)] / denom;
          for (int64_t j = 0; j < c; ++j) p.grad[size_t(r * c + j)] += g * x[r * c + j];
        }
      });
  const T* pa = a.data();
  T* po = out.mutable_data();
  for (int64_t r = 0; r < rows; ++r) {
    T acc = 0;
    for (int64_t j = 0; j < c; ++j) {
      T v = pa[r * c + j];
      acc += v * v;
    }
    po[r] = std::sqrt(acc);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape ops.

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, const Shape& shape) {
  require_shape(shape_numel(shape) == a.numel(), "reshape: element count mismatch");
  return detail::new_view(shape, a);
}

// Packing: pure relabeling of adjacent dimensions, element order unchanged.
template <typename T>
Tensor<T> pack_batch(const Tensor<T>& x) {  // [B,N,S,D] -> [B*N,S,D]
  require_shape(x.rank() == 4, "pack_batch: expected rank-4 input");
  return reshape(x, {x.dim(0) * x.dim(1), x.dim(2), x.dim(3)});
}

template <typename T>
Tensor<T> unpack_batch(const Tensor<T>& x, int64_t b, int64_t n) {  // [B*N,S,D] -> [B,N,S,D]
  require_shape(x.rank() == 3 && x.dim(0) == b * n, "unpack_batch: bad dims");
  return reshape(x, {b, n, x.dim(1), x.dim(2)});
}

template <typename T>
Tensor<T> pack_seq(const Tensor<T>& x) {  // [B,N,S,D] -> [B,N*S,D]
  require_shape(x.rank() == 4, "pack_seq: expected rank-4 input");
  return reshape(x, {x.dim(0), x.dim(1) * x.dim(2), x.dim(3)});
}

template <typename T>
Tensor<T> unpack_seq(const Tensor<T>& x, int64_t n, int64_t s) {  // [B,N*S,D] -> [B,N,S,D]
  require_shape(x.rank() == 3 && x.dim(1) == n * s, "unpack_seq: bad dims");
  return reshape(x, {x.dim(0), n, s, x.dim(2)});
}

template <typename T>
Tensor<T> transpose_last2(const Tensor<T>& x) {
  require_shape(x.rank() >= 2, "transpose_last2: rank < 2");
  const int64_t a = x.dim(x.rank() - 2), b = x.dim(x.rank() - 1);
  const int64_t batch = x.numel() / (a * b);
  Shape out_shape = x.shape();
  std::swap(out_shape[out_shape.size() - 1], out_shape[out_shape.size() - 2]);
  Tensor<T> out = detail::new_op<T>(
      out_shape, {x}, [a, b, batch](detail::Node<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int64_t n = 0; n < batch; ++n) {
          const T* g = self.grad.data() + n * a * b;
          T* pg = p.grad.data() + n * a * b;
          for (int64_t i = 0; i < a; ++i)
            for (int64_t j = 0; j < b; ++j) pg[i * b + j] += g[j * a + i];
        }
      });
  const T* px = x.data();
  T* po = out.mutable_data();
  for (int64_t n = 0; n < batch; ++n) {
    const T* xi = px + n * a * b;
    T* oi = po + n * a * b;
    for (int64_t i = 0; i < a; ++i)
      for (int64_t j = 0; j < b; ++j) oi[j * a + i] = xi[i * b + j];
  }
  return out;
}

// [B,S,D] -> [B*H,S,D/H]
template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, int64_t heads) {
  require_shape(x.rank() == 3, "split_heads: expected rank-3");
  const int64_t B = x.dim(0), S = x.dim(1), D = x.dim(2);
  require_shape(D % heads == 0, "split_heads: dim not divisible by heads");
  const int64_t hd = D / heads;
  Tensor<T> out = detail::new_op<T>(
      Shape{B * heads, S, hd}, {x}, [B, S, D, heads, hd](detail::Node<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int64_t b = 0; b < B; ++b)
          for (int64_t h = 0; h < heads; ++h)
            for (int64_t s = 0; s < S; ++s) {
              const T* g = self.grad.data() + ((b * heads + h) * S + s) * hd;
              T* pg = p.grad.data() + (b * S + s) * D + h * hd;
              for (int64_t c = 0; c < hd; ++c) pg[c] += g[c];
            }
      });
  const T* px = x.data();
  T* po = out.mutable_data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t h = 0; h < heads; ++h)
      for (int64_t s = 0; s < S; ++s) {
        const T* src = px + (b * S + s) * D + h * hd;
        T* dst = po + ((b * heads + h) * S + s) * hd;
        std::copy(src, src + hd, dst);
      }
  return out;
}

// [B*H,S,D/H] -> [B,S,D]
template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x, int64_t heads) {
  require_shape(x.rank() == 3 && x.dim(0) % heads == 0, "merge_heads: bad dims");
  const int64_t B = x.dim(0) / heads, S = x.dim(1), hd = x.dim(2);
  const int64_t D = hd * heads;
  Tensor<T> out = detail::new_op<T>(
      Shape{B, S, D}, {x}, [B, S, D, heads, hd](detail::Node<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int64_t b = 0; b < B; ++b)
          for (int64_t h = 0; h < heads; ++h)
            for (int64_t s = 0; s < S; ++s) {
              const T* g = self.grad.data() + (b * S + s) * D + h * hd;
              T* pg = p.grad.data() + ((b * heads + h) * S + s) * hd;
              for (int64_t c = 0; c < hd; ++c) pg[c] += g[c];
            }
      });
  const T* px = x.data();
  T* po = out.mutable_data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t h = 0; h < heads; ++h)
      for (int64_t s = 0; s < S; ++s) {
        const T* src = px + ((b * heads + h) * S + s) * hd;
        T* dst = po + (b * S + s) * D + h * hd;
        std::copy(src, src + hd, dst);
      }
  return out;
}

template <typename T>
Tensor<T> slice_lastdim(const Tensor<T>& x, int64_t lo, int64_t hi) {
  const int64_t c = x.dim(x.rank() - 1);
  require_shape(lo >= 0 && hi <= c && lo < hi, "slice_lastdim: bad range");
  const int64_t rows = x.numel() / c;
  const int64_t w = hi - lo;
  Shape out_shape = x.shape();
  out_shape.back() = w;
  Tensor<T> out = detail::new_op<T>(
      out_shape, {x}, [c, rows, lo, w](detail::Node<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < w; ++j)
            p.grad[size_t(r * c + lo + j)] += self.grad[size_t(r * w + j)];
      });
  const T* px = x.data();
  T* po = out.mutable_data();
  for (int64_t r = 0; r < rows; ++r)
    std::copy(px + r * c + lo, px + r * c + hi, po + r * w);
  return out;
}

// [V,H,W,C] -> [V,S,patch*patch*C] with S = (H/p)*(W/p)
template <typename T>
Tensor<T> patchify(const Tensor<T>& x, int64_t p) {
  require_shape(x.rank() == 4, "patchify: expected [V,H,W,C]");
  const int64_t V = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  require_shape(H % p == 0 && W % p == 0, "patchify: resolution not divisible by patch");
  const int64_t gh = H / p, gw = W / p, S = gh * gw, pc = p * p * C;
  Tensor<T> out = detail::new_op<T>(
      Shape{V, S, pc}, {x}, [=](detail::Node<T>& self) {
        auto& par = *self.parents[0];
        if (!par.requires_grad) return;
        par.ensure_grad();
        for (int64_t v = 0; v < V; ++v)
          for (int64_t s = 0; s < S; ++s) {
            int64_t gy = s / gw, gx = s % gw;
            for (int64_t dy = 0; dy < p; ++dy)
              for (int64_t dx = 0; dx < p; ++dx) {
                const T* g = self.grad.data() + ((v * S + s) * pc + (dy * p + dx) * C);
                T* pg = par.grad.data() + ((v * H + gy * p + dy) * W + gx * p + dx) * C;
                for (int64_t c = 0; c < C; ++c) pg[c] += g[c];
              }
          }
      });
  const T* px = x.data();
  T* po = out.mutable_data();
  for (int64_t v = 0; v < V; ++v)
    for (int64_t s = 0; s < S; ++s) {
      int64_t gy = s / gw, gx = s % gw;
      for (int64_t dy = 0; dy < p; ++dy)
        for (int64_t dx = 0; dx < p; ++dx) {
          const T* src = px + ((v * H + gy * p + dy) * W + gx * p + dx) * C;
          T* dst = po + ((v * S + s) * pc + (dy * p + dx) * C);
          std::copy(src, src + C, dst);
        }
    }
  return out;
}

// [V,S,patch*patch*C] -> [V,H,W,C]; exact inverse of patchify
template <typename T>
Tensor<T> unpatchify(const Tensor<T>& x, int64_t p, int64_t gh, int64_t gw, int64_t C) {
  require_shape(x.rank() == 3 && x.dim(1) == gh * gw && x.dim(2) == p * p * C,
                "unpatchify: bad dims");
  const int64_t V = x.dim(0), S = gh * gw, pc = p * p * C, H = gh * p, W = gw * p;
  Tensor<T> out = detail::new_op<T>(
      Shape{V, H, W, C}, {x}, [=](detail::Node<T>& self) {
        auto& par = *self.parents[0];
        if (!par.requires_grad) return;
        par.ensure_grad();
        for (int64_t v = 0; v < V; ++v)
          for (int64_t s = 0; s < S; ++s) {
            int64_t gy = s / gw, gx = s % gw;
            for (int64_t dy = 0; dy < p; ++dy)
              for (int64_t dx = 0; dx < p; ++dx) {
                const T* g = self.grad.data() + ((v * H + gy * p + dy) * W + gx * p + dx) * C;
                T* pg = par.grad.data() + ((v * S + s) * pc + (dy * p + dx) * C);
                for (int64_t c = 0; c < C; ++c) pg[c] += g[c];
              }
          }
      });
  const T* px = x.data();
  T* po = out.mutable_data();
  for (int64_t v = 0; v < V; ++v)
    for (int64_t s = 0; s < S; ++s) {
      int64_t gy = s / gw, gx = s % gw;
      for (int64_t dy = 0; dy < p; ++dy)
        for (int64_t dx = 0; dx < p; ++dx) {
          const T* src = px + ((v * S + s) * pc + (dy * p + dx) * C);
          T* dst = po + ((v * H + gy * p + dy) * W + gx * p + dx) * C;
          std::copy(src, src + C, dst);
        }
    }
  return out;
}

// ---------------------------------------------------------------------------
// Matrix products.

// 2-D x 2-D, batched x 2-D (leading dims flattened), or equal-rank batched.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() == 2 && b.rank() == 2) {
    const int64_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
    require_shape(b.dim(0) == K, "matmul: inner dims differ");
    Tensor<T> out = detail::new_op<T>(
        Shape{M, N}, {a, b}, [M, K, N](detail::Node<T>& self) {
          auto& pa = *self.parents[0];
          auto& pb = *self.parents[1];
          if (pa.requires_grad) {
            pa.ensure_grad();
            detail::mm_nt(self.grad.data(), pb.data(), pa.grad.data(), M, N, K);
          }
          if (pb.requires_grad) {
            pb.ensure_grad();
            detail::mm_tn(pa.data(), self.grad.data(), pb.grad.data(), M, K, N);
          }
        });
    detail::mm_nn(a.data(), b.data(), out.mutable_data(), M, K, N);
    return out;
  }
  if (a.rank() > 2 && b.rank() == 2) {
    Shape lead(a.shape().begin(), a.shape().end() - 1);
    Tensor<T> flat = reshape(a, {a.numel() / a.dim(a.rank() - 1), a.dim(a.rank() - 1)});
    Tensor<T> prod = matmul(flat, b);
    lead.push_back(b.dim(1));
    return reshape(prod, lead);
  }
  require_shape(a.rank() == b.rank() && a.rank() >= 3, "matmul: unsupported ranks");
  for (int i = 0; i + 2 < a.rank(); ++i)
    require_shape(a.dim(i) == b.dim(i), "matmul: batch dims differ");
  const int64_t M = a.dim(a.rank() - 2), K = a.dim(a.rank() - 1);
  const int64_t K2 = b.dim(b.rank() - 2), N = b.dim(b.rank() - 1);
  require_shape(K == K2, "matmul: inner dims differ");
  const int64_t batch = a.numel() / (M * K);
  Shape out_shape(a.shape().begin(), a.shape().end() - 2);
  out_shape.push_back(M);
  out_shape.push_back(N);
  Tensor<T> out = detail::new_op<T>(
      out_shape, {a, b}, [batch, M, K, N](detail::Node<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
          pa.ensure_grad();
          detail::bmm_nt(self.grad.data(), pb.data(), pa.grad.data(), batch, M, N, K);
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          detail::bmm_tn(pa.data(), self.grad.data(), pb.grad.data(), batch, M, K, N);
        }
      });
  detail::bmm_nn(a.data(), b.data(), out.mutable_data(), batch, M, K, N);
  return out;
}

template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& x, const Tensor<T>& b) {
  const int64_t c = x.dim(x.rank() - 1);
  require_shape(b.rank() == 1 && b.dim(0) == c, "add_rowvec: bias shape");
  const int64_t rows = x.numel() / c;
  Tensor<T> out = detail::new_op<T>(
      x.shape(), {x, b}, [rows, c](detail::Node<T>& self) {
        auto& px = *self.parents[0];
        auto& pb = *self.parents[1];
        if (px.requires_grad) detail::accumulate(px, self.grad.data(), self.numel());
        if (pb.requires_grad) {
          pb.ensure_grad();
          for (int64_t r = 0; r < rows; ++r)
            for (int64_t j = 0; j < c; ++j) pb.grad[size_t(j)] += self.grad[size_t(r * c + j)];
        }
      });
  const T* pxv = x.data();
  const T* pbv = b.data();
  T* po = out.mutable_data();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < c; ++j) po[r * c + j] = pxv[r * c + j] + pbv[j];
  return out;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  require_shape(x.dim(x.rank() - 1) == w.dim(0), "linear: input dim mismatch");
  return add_rowvec(matmul(x, w), b);
}

// ---------------------------------------------------------------------------
// Normalization and softmax.

template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
  const int64_t c = x.dim(x.rank() - 1);
  const int64_t rows = x.numel() / c;
  Tensor<T> out = detail::new_op<T>(
      x.shape(), {x}, [rows, c](detail::Node<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        const T* y = self.data();
        for (int64_t r = 0; r < rows; ++r) {
          const T* yr = y + r * c;
          const T* gr = self.grad.data() + r * c;
          T dot = 0;
          for (int64_t j = 0; j < c; ++j) dot += gr[j] * yr[j];
          T* pg = p.grad.data() + r * c;
          for (int64_t j = 0; j < c; ++j) pg[j] += yr[j] * (gr[j] - dot);
        }
      });
  const T* px = x.data();
  T* po = out.mutable_data();
  parallel_for(rows, [&](int64_t r0, int64_t r1) {
    for (int64_t r = r0; r < r1; ++r) {
      const T* xr = px + r * c;
      T* yr = po + r * c;
      T m = xr[0];
      for (int64_t j = 1; j < c; ++j) m = std::max(m, xr[j]);
      T s = 0;
      for (int64_t j = 0; j < c; ++j) {
        yr[j] = std::exp(xr[j] - m);
        s += yr[j];
      }
      T inv = T(1) / s;
      for (int64_t j = 0; j < c; ++j) yr[j] *= inv;
    }
  });
  return out;
}

// LayerNorm over the trailing (channel) dimension, eps = 1e-6.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias) {
  const int64_t c = x.dim(x.rank() - 1);
  require_shape(gain.rank() == 1 && gain.dim(0) == c, "layer_norm: gain shape");
  require_shape(bias.rank() == 1 && bias.dim(0) == c, "layer_norm: bias shape");
  const int64_t rows = x.numel() / c;
  const T eps = T(1e-6);

  auto xhat = std::make_shared<std::vector<T>>(size_t(rows * c));
  auto inv_sigma = std::make_shared<std::vector<T>>(size_t(rows));

  Tensor<T> out = detail::new_op<T>(
      x.shape(), {x, gain, bias}, [rows, c, xhat, inv_sigma](detail::Node<T>& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        const T* gn = pg.data();
        if (pg.requires_grad) pg.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        if (px.requires_grad) px.ensure_grad();
        for (int64_t r = 0; r < rows; ++r) {
          const T* g = self.grad.data() + r * c;
          const T* xh = xhat->data() + r * c;
          if (pg.requires_grad)
            for (int64_t j = 0; j < c; ++j) pg.grad[size_t(j)] += g[j] * xh[j];
          if (pb.requires_grad)
            for (int64_t j = 0; j < c; ++j) pb.grad[size_t(j)] += g[j];
          if (px.requires_grad) {
            T mean_dxh = 0, mean_dxh_xh = 0;
            for (int64_t j = 0; j < c; ++j) {
              T dxh = g[j] * gn[j];
              mean_dxh += dxh;
              mean_dxh_xh += dxh * xh[j];
            }
            mean_dxh /= T(c);
            mean_dxh_xh /= T(c);
            T is = (*inv_sigma)[size_t(r)];
            for (int64_t j = 0; j < c; ++j) {
              T dxh = g[j] * gn[j];
              px.grad[size_t(r * c + j)] += is * (dxh - mean_dxh - xh[j] * mean_dxh_xh);
            }
          }
        }
      });
  const T* px = x.data();
  const T* pgain = gain.data();
  const T* pbias = bias.data();
  T* po = out.mutable_data();
  parallel_for(rows, [&](int64_t r0, int64_t r1) {
    for (int64_t r = r0; r < r1; ++r) {
      const T* xr = px + r * c;
      T mu = 0;
      for (int64_t j = 0; j < c; ++j) mu += xr[j];
      mu /= T(c);
      T var = 0;
      for (int64_t j = 0; j < c; ++j) {
        T d = xr[j] - mu;
        var += d * d;
      }
      var /= T(c);
      T is = T(1) / std::sqrt(var + eps);
      (*inv_sigma)[size_t(r)] = is;
      T* xh = xhat->data() + r * c;
      T* yr = po + r * c;
      for (int64_t j = 0; j < c; ++j) {
        xh[j] = (xr[j] - mu) * is;
        yr[j] = xh[j] * pgain[j] + pbias[j];
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Rotary position embedding over 2-D patch grids.
//
// The head dimension is split evenly between the two axes; within an axis,
// channel pairs (2j, 2j+1) rotate by pos_axis * base^(-2j / (head_dim/2)).

template <typename T>
struct RopeTable {
  int64_t seq = 0;
  int64_t head_dim = 0;
  std::vector<T> cos_v, sin_v;  // seq x head_dim/2

  static RopeTable build(std::span<const std::array<int, 2>> positions, int64_t head_dim,
                         double base) {
    require_shape(head_dim % 4 == 0, "rope: head_dim must be divisible by 4");
    RopeTable t;
    t.seq = int64_t(positions.size());
    t.head_dim = head_dim;
    const int64_t half = head_dim / 2;   // channels per axis
    const int64_t pairs = half / 2;      // rotation pairs per axis
    t.cos_v.resize(size_t(t.seq * half));
    t.sin_v.resize(size_t(t.seq * half));
    for (int64_t s = 0; s < t.seq; ++s) {
      for (int64_t axis = 0; axis < 2; ++axis) {
        double pos = double(positions[size_t(s)][size_t(axis)]);
        for (int64_t j = 0; j < pairs; ++j) {
          double freq = std::pow(base, -2.0 * double(j) / double(half));
          double ang = pos * freq;
          int64_t p = axis * pairs + j;
          t.cos_v[size_t(s * half + p)] = T(std::cos(ang));
          t.sin_v[size_t(s * half + p)] = T(std::sin(ang));
        }
      }
    }
    return t;
  }
};

template <typename T>
Tensor<T> rope_apply(const Tensor<T>& x, const RopeTable<T>& table) {
  require_shape(x.rank() == 3, "rope_apply: expected [V,S,hd]");
  const int64_t V = x.dim(0), S = x.dim(1), hd = x.dim(2);
  require_shape(hd == table.head_dim && S == table.seq, "rope_apply: table mismatch");
  const int64_t half = hd / 2;
  auto cos_v = std::make_shared<std::vector<T>>(table.cos_v);
  auto sin_v = std::make_shared<std::vector<T>>(table.sin_v);
  Tensor<T> out = detail::new_op<T>(
      x.shape(), {x}, [V, S, hd, half, cos_v, sin_v](detail::Node<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int64_t v = 0; v < V; ++v)
          for (int64_t s = 0; s < S; ++s) {
            const T* g = self.grad.data() + (v * S + s) * hd;
            T* pg = p.grad.data() + (v * S + s) * hd;
            const T* cr = cos_v->data() + s * half;
            const T* sr = sin_v->data() + s * half;
            for (int64_t j = 0; j < half; ++j) {
              T c = cr[j], sn = sr[j];
              // transpose of the forward rotation
              pg[2 * j] += g[2 * j] * c + g[2 * j + 1] * sn;
              pg[2 * j + 1] += -g[2 * j] * sn + g[2 * j + 1] * c;
            }
          }
      });
  const T* px = x.data();
  T* po = out.mutable_data();
  for (int64_t v = 0; v < V; ++v)
    for (int64_t s = 0; s < S; ++s) {
      const T* xi = px + (v * S + s) * hd;
      T* oi = po + (v * S + s) * hd;
      const T* cr = table.cos_v.data() + s * half;
      const T* sr = table.sin_v.data() + s * half;
      for (int64_t j = 0; j < half; ++j) {
        T a = xi[2 * j], b = xi[2 * j + 1];
        oi[2 * j] = a * cr[j] - b * sr[j];
        oi[2 * j + 1] = a * sr[j] + b * cr[j];
      }
    }
  return out;
}

// ---------------------------------------------------------------------------
// Attention: queries from x, keys/values from y, rotary embedding on q and k.
// Self-attention is attn(x, x, ...).

template <typename T>
struct AttnWeights {
  Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
};

template <typename T>
Tensor<T> attn(const Tensor<T>& x, const Tensor<T>& y, int64_t heads,
               const RopeTable<T>& rope_x, const RopeTable<T>& rope_y, const AttnWeights<T>& w) {
  require_shape(x.rank() == 3 && y.rank() == 3, "attn: expected rank-3 inputs");
  require_shape(x.dim(0) == y.dim(0), "attn: batch mismatch");
  require_shape(x.dim(2) == y.dim(2), "attn: channel mismatch");
  const int64_t D = x.dim(2);
  require_shape(D % heads == 0, "attn: dim not divisible by heads");
  const int64_t hd = D / heads;

  Tensor<T> q = split_heads(linear(x, w.wq, w.bq), heads);
  Tensor<T> k = split_heads(linear(y, w.wk, w.bk), heads);
  Tensor<T> v = split_heads(linear(y, w.wv, w.bv), heads);
  q = rope_apply(q, rope_x);
  k = rope_apply(k, rope_y);
  q = scale(q, T(1.0 / std::sqrt(double(hd))));
  Tensor<T> att = softmax_lastdim(matmul(q, transpose_last2(k)));
  Tensor<T> ctx = merge_heads(matmul(att, v), heads);
  return linear(ctx, w.wo, w.bo);
}

// ---------------------------------------------------------------------------
// Reverse accumulation.

template <typename T>
void backward(const Tensor<T>& loss) {
  require_shape(loss.numel() == 1, "backward: loss must be scalar");
  auto root = loss.node();
  if (!root->requires_grad)
    fail(ErrorKind::NoGradPath, "loss does not depend on any differentiable input");

  // reverse post-order over parent edges: every node before its parents
  std::vector<detail::Node<T>*> order;
  std::unordered_set<detail::Node<T>*> visited;
  struct Frame {
    detail::Node<T>* n;
    size_t next;
  };
  std::vector<Frame> stack;
  stack.push_back({root.get(), 0});
  visited.insert(root.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      detail::Node<T>* p = f.n->parents[f.next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node<T>* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------------------
// Parameter store and AdamW.

template <typename T>
struct AdamState {
  std::vector<T> m, v;
};

template <typename T>
class ParamStore {
 public:
  bool has(const std::string& name) const { return params_.count(name) != 0; }

  Tensor<T>& get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) fail(ErrorKind::UnknownParam, name);
    return it->second;
  }

  const Tensor<T>& get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) fail(ErrorKind::UnknownParam, name);
    return it->second;
  }

  Tensor<T>& get_or_create(const std::string& name, const Shape& shape,
                           const std::function<void(T*, int64_t)>& init) {
    auto it = params_.find(name);
    if (it != params_.end()) {
      require_shape(it->second.shape() == shape, "parameter shape changed: " + name);
      return it->second;
    }
    Tensor<T> t = Tensor<T>::zeros(shape);
    if (init) init(t.mutable_data(), t.numel());
    t.set_requires_grad(true);
    order_.push_back(name);
    auto [ins, ok] = params_.emplace(name, std::move(t));
    (void)ok;
    return ins->second;
  }

  void put(const std::string& name, Tensor<T> t) {
    t.set_requires_grad(true);
    if (!params_.count(name)) order_.push_back(name);
    params_.insert_or_assign(name, std::move(t));
  }

  const std::vector<std::string>& names() const { return order_; }

  AdamState<T>& adam_state(const std::string& name) { return adam_[name]; }
  const AdamState<T>* find_adam_state(const std::string& name) const {
    auto it = adam_.find(name);
    return it == adam_.end() ? nullptr : &it->second;
  }

  void zero_grad() {
    for (auto& name : order_) params_.at(name).zero_grad();
  }

  int64_t total_params() const {
    int64_t n = 0;
    for (auto& name : order_) n += params_.at(name).numel();
    return n;
  }

  int64_t step = 0;

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, Tensor<T>> params_;
  std::unordered_map<std::string, AdamState<T>> adam_;
};

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

// Decoupled weight decay; bias-corrected moments. Parameters that received
// no gradient this step are left untouched.
template <typename T>
void adamw_step(ParamStore<T>& store, const AdamWConfig& cfg) {
  store.step += 1;
  const double t = double(store.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (const auto& name : store.names()) {
    Tensor<T>& p = store.get(name);
    if (!p.has_grad()) continue;
    auto& st = store.adam_state(name);
    const int64_t n = p.numel();
    if (st.m.empty()) {
      st.m.assign(size_t(n), T(0));
      st.v.assign(size_t(n), T(0));
    }
    const std::vector<T>& g = p.grad();
    T* w = p.mutable_data();
    for (int64_t i = 0; i < n; ++i) {
      T gi = g[size_t(i)];
      st.m[size_t(i)] = T(cfg.beta1) * st.m[size_t(i)] + T(1.0 - cfg.beta1) * gi;
      st.v[size_t(i)] = T(cfg.beta2) * st.v[size_t(i)] + T(1.0 - cfg.beta2) * gi * gi;
      T mhat = st.m[size_t(i)] / T(bc1);
      T vhat = st.v[size_t(i)] / T(bc2);
      w[i] -= T(cfg.lr * cfg.weight_decay) * w[i];
      w[i] -= T(cfg.lr) * mhat / (std::sqrt(vhat) + T(cfg.eps));
    }
  }
}

// Linear warmup from zero to base_lr over warmup_frac of the run, then
// cosine decay to min_lr.
struct LrSchedule {
  double base_lr = 1e-4;
  double min_lr = 1e-6;
  double warmup_frac = 0.1;
  int64_t total_steps = 1;

  double at(int64_t step) const {
    int64_t warmup = int64_t(std::llround(warmup_frac * double(total_steps)));
    if (warmup > 0 && step < warmup) return base_lr * double(step + 1) / double(warmup);
    int64_t rest = std::max<int64_t>(1, total_steps - warmup);
    double progress = double(step - warmup) / double(rest);
    progress = std::clamp(progress, 0.0, 1.0);
    return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + std::cos(M_PI * progress));
  }
};

}  // namespace mfos::engine
