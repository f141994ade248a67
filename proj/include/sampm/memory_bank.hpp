#pragma once

// Fixed-capacity FIFO of per-frame (image embedding, mask embedding) pairs.
// Works over plain tensors (inference) and tape variables (training, where
// gradients flow back through stored mask embeddings).

#include <cstddef>
#include <deque>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sampm/autodiff.hpp"
#include "sampm/tensor.hpp"

namespace sampm::memory {

template <class Emb>
struct FrameRecord {
  std::size_t frame_index = 0;
  Emb image_emb;
  Emb mask_emb;
};

template <class Emb>
struct Gathered {
  Emb images;  // (t, d, h, w), oldest first
  Emb masks;   // (t, d, h, w)
  std::vector<std::size_t> frame_indices;
};

inline Tensor stack_embeddings(const std::vector<Tensor>& parts) { return stack(parts); }

inline ad::Var stack_embeddings(const std::vector<ad::Var>& parts) {
  std::vector<ad::Var> lifted;
  lifted.reserve(parts.size());
  for (const ad::Var& v : parts) {
    Shape s = v.shape();
    s.insert(s.begin(), 1);
    lifted.push_back(ad::reshape(v, s));
  }
  return ad::concat(lifted, 0);
}

inline const Shape& shape_of(const Tensor& t) { return t.shape(); }
inline const Shape& shape_of(const ad::Var& v) { return v.shape(); }

template <class Emb>
class MemoryBank {
 public:
  /// With `pin_first`, the first record ever pushed is never evicted
  /// (ablation only; requires capacity >= 2).
  explicit MemoryBank(std::size_t capacity, bool pin_first = false) : capacity_(capacity), pin_first_(pin_first) {
    if (capacity_ == 0) throw std::invalid_argument("memory capacity must be at least 1");
    if (pin_first_ && capacity_ < 2) throw std::invalid_argument("pin_first needs capacity >= 2");
  }

  /// Appends `rec`, evicting the oldest (unpinned) record when over capacity.
  void push(FrameRecord<Emb> rec) {
    if (shape_of(rec.image_emb) != shape_of(rec.mask_emb)) {
      throw DimensionError("frame record embeddings differ: " + shape_str(shape_of(rec.image_emb)) + " vs " +
                           shape_str(shape_of(rec.mask_emb)));
    }
    if (!records_.empty()) {
      if (rec.frame_index <= records_.back().frame_index) {
        throw std::invalid_argument("frame index " + std::to_string(rec.frame_index) + " does not follow " +
                                    std::to_string(records_.back().frame_index));
      }
      if (shape_of(rec.image_emb) != shape_of(records_.back().image_emb)) {
        throw DimensionError("frame record shape " + shape_str(shape_of(rec.image_emb)) + " differs from stored " +
                             shape_str(shape_of(records_.back().image_emb)));
      }
    }
    if (!first_index_) first_index_ = rec.frame_index;
    records_.push_back(std::move(rec));
    if (records_.size() > capacity_) {
      const bool keep_front = pin_first_ && records_.front().frame_index == *first_index_;
      records_.erase(records_.begin() + (keep_front ? 1 : 0));
    }
  }

  /// Stacks stored embeddings oldest to newest. Throws on an empty bank.
  Gathered<Emb> gather() const {
    if (records_.empty()) throw std::logic_error("gather from an empty memory bank; seed it with the first frame");
    std::vector<Emb> images, masks;
    Gathered<Emb> out;
    for (const auto& r : records_) {
      images.push_back(r.image_emb);
      masks.push_back(r.mask_emb);
      out.frame_indices.push_back(r.frame_index);
    }
    out.images = stack_embeddings(images);
    out.masks = stack_embeddings(masks);
    return out;
  }

  std::size_t size() const { return records_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return records_.empty(); }
  const std::deque<FrameRecord<Emb>>& records() const { return records_; }

  std::vector<std::size_t> frame_indices() const {
    std::vector<std::size_t> out;
    for (const auto& r : records_) out.push_back(r.frame_index);
    return out;
  }

 private:
  std::size_t capacity_;
  bool pin_first_;
  std::optional<std::size_t> first_index_;
  std::deque<FrameRecord<Emb>> records_;
};

using TensorBank = MemoryBank<Tensor>;
using VarBank = MemoryBank<ad::Var>;

}  // namespace sampm::memory
