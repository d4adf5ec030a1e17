#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <unordered_set>
#include <vector>

#include "anogan/tensor.hpp"

namespace anogan {

// Reverse-mode gradient tape.
//
// Operations append themselves in execution order, so the recorded list is
// already topologically sorted. backward() walks it once in reverse. A tape
// is single-threaded; independent tapes may run on separate threads.
//
// Tensors passed to freeze() are treated as constants even when they have
// requires_grad set. This is how a shared model is held fixed while only the
// latent input is optimized, without mutating the model.
class Tape {
 public:
  // Reads output.grad() and accumulates into the gradients of the inputs it
  // was recorded with.
  using BackwardFn = std::function<void(const Tensor& output)>;

  void freeze(const Tensor& t);
  void freeze(const std::vector<Tensor>& ts);
  bool tracks(const Tensor& t) const;

  void record(std::string name, std::vector<Tensor> inputs, Tensor output, BackwardFn backward);

  // Seeds d(root)/d(root) = 1 and propagates to every tracked tensor seen by
  // the tape. Intermediate gradients are reset first, so calling this twice
  // on the same tape (with leaf gradients zeroed in between) reproduces the
  // same leaf gradients. Leaf gradients accumulate otherwise. Returns the
  // number of recorded operations visited.
  std::size_t backward(const Tensor& root);

  std::size_t size() const { return entries_.size(); }
  std::vector<std::string> op_names() const;
  void clear();

 private:
  struct Entry {
    std::string name;
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };

  std::vector<Entry> entries_;
  std::unordered_set<const void*> frozen_;
};

}  // namespace anogan
