#include "mfos/engine.hpp"

#include <atomic>
#include <mutex>

namespace mfos::engine {

namespace {
std::atomic<int64_t> g_alloc_count{0};
std::atomic<int64_t> g_alloc_bytes{0};
std::mutex g_record_mutex;
bool g_recording = false;
std::vector<int64_t> g_record;

thread_local bool g_grad_enabled = true;
}  // namespace

int64_t AllocStats::count() { return g_alloc_count.load(std::memory_order_relaxed); }
int64_t AllocStats::bytes() { return g_alloc_bytes.load(std::memory_order_relaxed); }

void AllocStats::note(int64_t bytes) {
  g_alloc_count.fetch_add(1, std::memory_order_relaxed);
  g_alloc_bytes.fetch_add(bytes, std::memory_order_relaxed);
  std::lock_guard<std::mutex> lk(g_record_mutex);
  if (g_recording) g_record.push_back(bytes);
}

void AllocStats::start_recording() {
  std::lock_guard<std::mutex> lk(g_record_mutex);
  g_recording = true;
  g_record.clear();
}

std::vector<int64_t> AllocStats::stop_recording() {
  std::lock_guard<std::mutex> lk(g_record_mutex);
  g_recording = false;
  return std::move(g_record);
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev; }

}  // namespace mfos::engine
