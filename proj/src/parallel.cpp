#include "mfos/parallel.hpp"

#include <algorithm>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace mfos {

int thread_count() {
  static const int cached = [] {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw < 1) hw = 1;
    if (const char* env = std::getenv("MFOS_THREADS")) {
      int v = std::atoi(env);
      if (v >= 1) hw = std::min(hw, v);
    }
    return hw;
  }();
  return cached;
}

namespace {

// Nested parallel_for calls run serially on the calling thread.
thread_local bool g_inside_chunk = false;

// Persistent pool with one job at a time; chunks are handed out under a
// mutex. Chunk work is coarse (matmul row blocks, image rows), so the
// per-chunk lock cost is noise. The calling thread runs chunk 0 itself and
// then helps drain the queue.
class Pool {
 public:
  static Pool& instance() {
    static Pool* p = new Pool(thread_count() - 1);  // leaked; workers live for the process
    return *p;
  }

  void run(int64_t n, int64_t chunks, const std::function<void(int64_t, int64_t)>& fn) {
    std::unique_lock<std::mutex> job(job_mutex_);
    {
      std::lock_guard<std::mutex> lk(m_);
      fn_ = &fn;
      n_ = n;
      chunks_ = chunks;
      next_ = 1;
      completed_ = 0;
    }
    cv_.notify_all();
    exec(0);
    for (;;) {
      int64_t c = -1;
      {
        std::lock_guard<std::mutex> lk(m_);
        if (next_ < chunks_) c = next_++;
      }
      if (c < 0) break;
      exec(c);
    }
    {
      std::unique_lock<std::mutex> lk(m_);
      done_cv_.wait(lk, [&] { return completed_ == chunks_; });
      chunks_ = 0;  // park workers until the next job
      fn_ = nullptr;
    }
  }

 private:
  explicit Pool(int workers) {
    for (int i = 0; i < workers; ++i) {
      std::thread([this] { worker(); }).detach();
    }
  }

  void worker() {
    for (;;) {
      int64_t c = -1;
      {
        std::unique_lock<std::mutex> lk(m_);
        cv_.wait(lk, [&] { return next_ < chunks_; });
        c = next_++;
      }
      exec(c);
    }
  }

  void exec(int64_t c) {
    int64_t per = (n_ + chunks_ - 1) / chunks_;
    int64_t b = c * per;
    int64_t e = std::min<int64_t>(n_, b + per);
    if (b < e) {
      g_inside_chunk = true;
      (*fn_)(b, e);
      g_inside_chunk = false;
    }
    std::lock_guard<std::mutex> lk(m_);
    if (++completed_ == chunks_) done_cv_.notify_all();
  }

  std::mutex job_mutex_;
  std::mutex m_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  const std::function<void(int64_t, int64_t)>* fn_ = nullptr;
  int64_t n_ = 0;
  int64_t chunks_ = 0;
  int64_t next_ = 0;
  int64_t completed_ = 0;
};

}  // namespace

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
  if (n <= 0) return;
  int64_t chunks = std::min<int64_t>(thread_count(), n);
  if (chunks <= 1 || g_inside_chunk) {
    fn(0, n);
    return;
  }
  Pool::instance().run(n, chunks, fn);
}

}  // namespace mfos
