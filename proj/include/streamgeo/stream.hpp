#pragma once

#include "streamgeo/model.hpp"
#include "streamgeo/scene.hpp"
#include "streamgeo/transformer.hpp"

#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace streamgeo {

inline constexpr std::size_t kUnbounded = std::numeric_limits<std::size_t>::max();

// Bounded FIFO of per-block FrameKV for the most recent frames of one stream.
class SlidingCache {
public:
    struct Entry {
        std::int64_t frame_index = 0;
        std::vector<FrameKV> blocks;
    };

    explicit SlidingCache(std::size_t capacity);
    static SlidingCache unbounded() { return SlidingCache(kUnbounded); }

    // Appends the frame and evicts the oldest entry once capacity is exceeded.
    // Frames must arrive with consecutive indices.
    void push(std::int64_t frame_index, std::vector<FrameKV> kv);
    void reset();

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    std::size_t resident_elements() const { return resident_; }
    std::vector<std::int64_t> indices() const;
    const Entry& entry(std::size_t i) const { return entries_.at(i); }

    // Per-block views for run_stack, oldest first.
    std::vector<BlockCacheView> view(std::size_t blocks) const;

private:
    std::size_t capacity_;
    std::deque<Entry> entries_;
    std::size_t resident_ = 0;
};

void fifo_update(SlidingCache& cache, std::int64_t frame_index, std::vector<FrameKV> kv);

struct LedgerRow {
    std::int64_t frame_index = 0;
    std::uint64_t flops = 0;
    std::uint64_t peak_cache_elements = 0;
    std::int64_t wall_ns = 0;
};

struct CostLedger {
    std::vector<LedgerRow> rows;

    std::uint64_t cumulative_flops(std::size_t frames) const;
    void write_csv(const std::filesystem::path& path) const;
};

struct DriveResult {
    std::vector<FramePrediction> predictions;
    CostLedger ledger;
};

// Streaming step: encode, attend to the cache, predict, then push this frame.
FramePrediction stream_step(const Model& model, const FrameInput& frame, SlidingCache& cache, FlopCounter* counter);

DriveResult drive_windowed(const Model& model, std::span<const FrameInput> frames, std::size_t window);
DriveResult drive_fullhistory(const Model& model, std::span<const FrameInput> frames);
// At each t, recomputes frames 0..t jointly from scratch with a causal temporal
// mask (optionally truncated to `window` past frames) and emits frame t.
DriveResult drive_batch(const Model& model, std::span<const FrameInput> frames, std::size_t window = kUnbounded);

// Joint processing of frames 0..t; returns the final tokens of every frame.
std::vector<TokenSet> joint_stack(const Model& model, std::span<const FrameInput> frames, std::size_t window,
                                  FlopCounter* counter, std::size_t* peak_elements = nullptr);

struct EquivalenceReport {
    bool pass = false;
    double tolerance = 1e-5;
    double max_error = 0.0;           // max |a-b| / (|b| + abs_tol/rel_tol)
    std::int64_t worst_frame = -1;
    std::string worst_field;
    std::size_t worst_element = 0;
    double worst_stream_value = 0.0;
    double worst_batch_value = 0.0;
    bool truncated_baseline = true;   // false when W >= T and plain causal batch was used
    std::vector<double> frame_errors;
};

// Windowed streaming vs window-masked joint processing, elementwise with
// relative 1e-5 / absolute 1e-6 tolerance over tokens, pointmaps, pose and trajectory.
EquivalenceReport check_equivalence(const Model& model, std::span<const FrameInput> frames, std::size_t window);

std::string format_report(const EquivalenceReport& r);

} // namespace streamgeo
