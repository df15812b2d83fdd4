#include <doctest.h>

#include <memory>
#include <thread>

#include "fps/alloc_meter.hpp"
#include "fps/autograd.hpp"
#include "fps/ops.hpp"

using namespace fps;

TEST_CASE("allocations and releases move live and peak bytes") {
  auto meter = std::make_shared<AllocationMeter>();
  ScopedMeter scope(meter);
  {
    const Tensor a = Tensor::zeros({10});
    CHECK(meter->current_live_bytes() == 80);
    const Tensor b = Tensor::zeros({5, 2});
    CHECK(meter->current_live_bytes() == 160);
  }
  CHECK(meter->current_live_bytes() == 0);
  CHECK(meter->peak_live_bytes() == 160);
}

TEST_CASE("copies and views share one buffer") {
  auto meter = std::make_shared<AllocationMeter>();
  ScopedMeter scope(meter);
  const Tensor a = Tensor::zeros({4, 4});
  const Tensor b = a;
  const Tensor c = reshape(a, {16});
  CHECK(meter->current_live_bytes() == 128);
  (void)b;
  (void)c;
}

TEST_CASE("reset_peak sets a baseline") {
  auto meter = std::make_shared<AllocationMeter>();
  ScopedMeter scope(meter);
  const Tensor kept = Tensor::zeros({100});
  { const Tensor tmp = Tensor::zeros({50}); }
  CHECK(meter->peak_live_bytes() == 1200);

  meter->reset_peak();
  CHECK(meter->baseline_bytes() == 800);
  CHECK(meter->peak_live_bytes() == 800);
  CHECK(meter->peak_above_baseline() == 0);
  { const Tensor tmp = Tensor::zeros({25}); }
  CHECK(meter->peak_above_baseline() == 200);
}

TEST_CASE("a buffer is released to the meter that counted it") {
  auto first = std::make_shared<AllocationMeter>();
  auto second = std::make_shared<AllocationMeter>();
  Tensor t;
  {
    ScopedMeter scope(first);
    t = Tensor::zeros({8});
  }
  {
    ScopedMeter scope(second);
    t = Tensor();
  }
  CHECK(first->current_live_bytes() == 0);
  CHECK(second->current_live_bytes() == 0);
  CHECK(second->peak_live_bytes() == 0);
}

TEST_CASE("scoped meters nest and restore") {
  auto outer = std::make_shared<AllocationMeter>();
  auto inner = std::make_shared<AllocationMeter>();
  ScopedMeter a(outer);
  {
    ScopedMeter b(inner);
    CHECK(AllocationMeter::current() == inner);
  }
  CHECK(AllocationMeter::current() == outer);
}

TEST_CASE("tape bytes follow the recorded graph") {
  auto meter = std::make_shared<AllocationMeter>();
  ScopedMeter scope(meter);
  Tensor w = Tensor::from_vector({2, 2}, {1, 2, 3, 4}, true);
  const Tensor x = Tensor::from_vector({3, 2}, {1, 1, 1, 1, 1, 1});
  {
    NoGradGuard off;
    const Tensor y = mean(matmul(x, w));
    CHECK(meter->tape_live_bytes() == 0);
  }
  const Tensor loss = mean(matmul(x, w));
  CHECK(meter->tape_live_bytes() > 0);
  const std::size_t held = meter->tape_live_bytes();
  backward(loss);
  CHECK(meter->tape_live_bytes() == 0);
  CHECK(meter->tape_peak_bytes() == held);
}

TEST_CASE("each thread has its own meter") {
  auto mine = std::make_shared<AllocationMeter>();
  ScopedMeter scope(mine);
  std::shared_ptr<AllocationMeter> theirs;
  std::thread worker([&] {
    theirs = AllocationMeter::current();
    const Tensor t = Tensor::zeros({1000});
  });
  worker.join();
  CHECK(theirs != mine);
  CHECK(theirs->peak_live_bytes() == 8000);
  CHECK(mine->peak_live_bytes() == 0);
}
