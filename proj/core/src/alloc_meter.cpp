#include "fps/alloc_meter.hpp"

#include <utility>

namespace fps {
namespace {

std::shared_ptr<AllocationMeter>& thread_meter() {
  thread_local std::shared_ptr<AllocationMeter> meter =
      std::make_shared<AllocationMeter>();
  return meter;
}

void raise_to(std::atomic<std::size_t>& peak, std::size_t value) {
  std::size_t seen = peak.load();
  while (seen < value && !peak.compare_exchange_weak(seen, value)) {
  }
}

}  // namespace

void AllocationMeter::reset_peak() {
  const std::size_t live = live_.load();
  peak_.store(live);
  baseline_.store(live);
  tape_peak_.store(tape_live_.load());
}

std::size_t AllocationMeter::peak_above_baseline() const {
  const std::size_t peak = peak_.load();
  const std::size_t base = baseline_.load();
  return peak > base ? peak - base : 0;
}

void AllocationMeter::on_allocate(std::size_t bytes) {
  const std::size_t live = live_.fetch_add(bytes) + bytes;
  raise_to(peak_, live);
}

void AllocationMeter::on_release(std::size_t bytes) { live_.fetch_sub(bytes); }

void AllocationMeter::on_tape_retain(std::size_t bytes) {
  const std::size_t live = tape_live_.fetch_add(bytes) + bytes;
  raise_to(tape_peak_, live);
}

void AllocationMeter::on_tape_release(std::size_t bytes) {
  tape_live_.fetch_sub(bytes);
}

const std::shared_ptr<AllocationMeter>& AllocationMeter::current() {
  return thread_meter();
}

ScopedMeter::ScopedMeter(std::shared_ptr<AllocationMeter> meter)
    : previous_(std::exchange(thread_meter(), std::move(meter))) {}

ScopedMeter::~ScopedMeter() { thread_meter() = std::move(previous_); }

}  // namespace fps
