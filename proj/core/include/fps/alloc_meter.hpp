#pragma once

#include <atomic>
#include <cstddef>
#include <memory>

namespace fps {

// Counts logical tensor-buffer bytes (elements * sizeof(double)). Allocator
// overhead is not included, so readings are identical across platforms.
//
// Every thread has a current meter. Buffers remember the meter that was
// current when they were allocated and report their release to it, so a meter
// may be read from any thread.
class AllocationMeter {
 public:
  AllocationMeter() = default;
  AllocationMeter(const AllocationMeter&) = delete;
  AllocationMeter& operator=(const AllocationMeter&) = delete;

  std::size_t current_live_bytes() const { return live_.load(); }
  std::size_t peak_live_bytes() const { return peak_.load(); }

  // Bytes of operands retained by the gradient tape.
  std::size_t tape_live_bytes() const { return tape_live_.load(); }
  std::size_t tape_peak_bytes() const { return tape_peak_.load(); }

  // peak := current (and likewise for tape bytes). Remembers the live bytes at
  // the reset so that peak_above_baseline() can report the extra bytes used by
  // a stage.
  void reset_peak();
  std::size_t baseline_bytes() const { return baseline_.load(); }
  std::size_t peak_above_baseline() const;

  void on_allocate(std::size_t bytes);
  void on_release(std::size_t bytes);
  void on_tape_retain(std::size_t bytes);
  void on_tape_release(std::size_t bytes);

  // The meter of the calling thread.
  static const std::shared_ptr<AllocationMeter>& current();

 private:
  friend class ScopedMeter;

  std::atomic<std::size_t> live_{0};
  std::atomic<std::size_t> peak_{0};
  std::atomic<std::size_t> tape_live_{0};
  std::atomic<std::size_t> tape_peak_{0};
  std::atomic<std::size_t> baseline_{0};
};

// Installs `meter` as the calling thread's meter for the lifetime of the scope.
class ScopedMeter {
 public:
  explicit ScopedMeter(std::shared_ptr<AllocationMeter> meter);
  ~ScopedMeter();
  ScopedMeter(const ScopedMeter&) = delete;
  ScopedMeter& operator=(const ScopedMeter&) = delete;

 private:
  std::shared_ptr<AllocationMeter> previous_;
};

}  // namespace fps
