#include "anogan/tape.hpp"

#include <algorithm>
#include <stdexcept>

namespace anogan {

void Tape::freeze(const Tensor& t) { frozen_.insert(t.id()); }

void Tape::freeze(const std::vector<Tensor>& ts) {
  for (const auto& t : ts) freeze(t);
}

bool Tape::tracks(const Tensor& t) const {
  return t.requires_grad() && !frozen_.contains(t.id());
}

void Tape::record(std::string name, std::vector<Tensor> inputs, Tensor output,
                  BackwardFn backward) {
  output.set_requires_grad(true);
  entries_.push_back({std::move(name), std::move(inputs), std::move(output), std::move(backward)});
}

std::size_t Tape::backward(const Tensor& root) {
  if (root.numel() != 1) {
    throw std::invalid_argument("Tape::backward: root must be a scalar, got shape " +
                                shape_string(root.shape()));
  }
  const auto produced = [&](const Tensor& t) {
    return std::any_of(entries_.begin(), entries_.end(),
                       [&](const Entry& e) { return e.output.is_same(t); });
  };
  if (!produced(root)) {
    throw std::invalid_argument("Tape::backward: root was not recorded on this tape");
  }

  std::unordered_set<const void*> outputs;
  for (auto& e : entries_) {
    outputs.insert(e.output.id());
    if (e.output.has_grad()) {
      e.output.zero_grad();
    } else {
      e.output.mutable_grad();
    }
  }
  // Leaves reachable or not end up with a materialized (possibly zero) gradient.
  for (auto& e : entries_) {
    for (auto& in : e.inputs) {
      if (tracks(in) && !outputs.contains(in.id())) in.mutable_grad();
    }
  }

  Tensor seed = root;
  seed.mutable_grad()[0] = 1.0f;

  std::size_t visited = 0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    it->backward(it->output);
    ++visited;
  }
  return visited;
}

std::vector<std::string> Tape::op_names() const {
  std::vector<std::string> names;
  names.reserve(entries_.size());
  for (const auto& e : entries_) names.push_back(e.name);
  return names;
}

void Tape::clear() {
  entries_.clear();
  frozen_.clear();
}

}  // namespace anogan
