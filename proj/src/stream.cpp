#include "streamgeo/stream.hpp"

#include "streamgeo/errors.hpp"
#include "streamgeo/io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

namespace streamgeo {

namespace {

using Clock = std::chrono::steady_clock;

std::int64_t elapsed_ns(Clock::time_point start) {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - start).count();
}

Tensor stack_heads(const std::vector<sublayer::Projection>& projs, Tensor sublayer::Projection::*field) {
    const auto& first = projs.front().*field;
    const auto h = first.dim(0);
    const auto n = first.dim(1);
    const auto dh = first.dim(2);
    const auto frames = static_cast<std::int64_t>(projs.size());
    Tensor out({h, frames * n, dh});
    for (std::int64_t hd = 0; hd < h; ++hd) {
        for (std::int64_t f = 0; f < frames; ++f) {
            const Tensor& src = projs[static_cast<std::size_t>(f)].*field;
            std::memcpy(out.raw() + (hd * frames * n + f * n) * dh, src.raw() + hd * n * dh,
                        sizeof(float) * static_cast<std::size_t>(n * dh));
        }
    }
    return out;
}

// Attention over the whole multi-frame sequence with a frame-level mask:
// query frame s sees key frame u iff u <= s and s - u <= window. Masked
// logits are -inf and are never computed.
Tensor masked_joint_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::int64_t tokens_per_frame,
                              std::size_t window, FlopCounter* counter) {
    const auto heads = q.dim(0);
    const auto total = q.dim(1);
    const auto dh = q.dim(2);
    const float scale = 1.0F / std::sqrt(static_cast<float>(dh));
    Tensor out({heads, total, dh});
    Tensor logits({1, total});
    std::uint64_t visible_pairs = 0;
    for (std::int64_t h = 0; h < heads; ++h) {
        const float* qh = q.raw() + h * total * dh;
        const float* kh = k.raw() + h * total * dh;
        const float* vh = v.raw() + h * total * dh;
        for (std::int64_t i = 0; i < total; ++i) {
            const std::int64_t s = i / tokens_per_frame;
            const std::int64_t first_frame =
                window == kUnbounded ? 0 : std::max<std::int64_t>(0, s - static_cast<std::int64_t>(window));
            const std::int64_t lo = first_frame * tokens_per_frame;
            const std::int64_t hi = (s + 1) * tokens_per_frame;
            for (std::int64_t j = 0; j < total; ++j) {
                if (j < lo || j >= hi) {
                    logits[static_cast<std::size_t>(j)] = -std::numeric_limits<float>::infinity();
                    continue;
                }
                float acc = 0.0F;
                for (std::int64_t c = 0; c < dh; ++c) {
                    acc += qh[i * dh + c] * kh[j * dh + c];
                }
                logits[static_cast<std::size_t>(j)] = acc * scale;
            }
            softmax_rows_inplace(logits);
            float* o = out.raw() + (h * total + i) * dh;
            for (std::int64_t j = lo; j < hi; ++j) {
                const float p = logits[static_cast<std::size_t>(j)];
                for (std::int64_t c = 0; c < dh; ++c) {
                    o[c] += p * vh[j * dh + c];
                }
            }
            visible_pairs += static_cast<std::uint64_t>(hi - lo);
        }
    }
    if (counter) {
        counter->add(4ULL * static_cast<std::uint64_t>(dh) * visible_pairs);
    }
    return out;
}

Tensor frame_slice(const Tensor& x, std::int64_t frame, std::int64_t tokens_per_frame) {
    const auto heads = x.dim(0);
    const auto total = x.dim(1);
    const auto dh = x.dim(2);
    Tensor out({heads, tokens_per_frame, dh});
    for (std::int64_t h = 0; h < heads; ++h) {
        std::memcpy(out.raw() + h * tokens_per_frame * dh, x.raw() + (h * total + frame * tokens_per_frame) * dh,
                    sizeof(float) * static_cast<std::size_t>(tokens_per_frame * dh));
    }
    return out;
}

struct Compare {
    EquivalenceReport* report;
    std::int64_t frame;
    double frame_max = 0.0;

    void operator()(const std::string& field, std::span<const float> a, std::span<const float> b) {
        if (a.size() != b.size()) {
            frame_max = std::numeric_limits<double>::infinity();
            update(field, 0, std::numeric_limits<double>::infinity(), 0.0, 0.0);
            return;
        }
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double err = std::abs(static_cast<double>(a[i]) - b[i]) / (std::abs(static_cast<double>(b[i])) + 0.1);
            frame_max = std::max(frame_max, err);
            update(field, i, err, a[i], b[i]);
        }
    }

    void update(const std::string& field, std::size_t i, double err, double a, double b) {
        if (err > report->max_error || report->worst_frame < 0) {
            report->max_error = err;
            report->worst_frame = frame;
            report->worst_field = field;
            report->worst_element = i;
            report->worst_stream_value = a;
            report->worst_batch_value = b;
        }
    }
};

std::vector<float> prediction_vector(const FramePrediction& p, bool pose) {
    std::vector<float> out;
    if (pose) {
        for (double v : p.pose.to_vector()) {
            out.push_back(static_cast<float>(v));
        }
    } else {
        for (const auto& w : p.trajectory) {
            out.insert(out.end(), {static_cast<float>(w.x), static_cast<float>(w.y), static_cast<float>(w.yaw)});
        }
    }
    return out;
}

} // namespace

SlidingCache::SlidingCache(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) {
        throw ConfigError("sliding cache capacity must be >= 1");
    }
}

void SlidingCache::push(std::int64_t frame_index, std::vector<FrameKV> kv) {
    if (!entries_.empty() && frame_index != entries_.back().frame_index + 1) {
        throw StreamDiscontinuityError("cache push: frame " + std::to_string(frame_index) + " does not follow " +
                                       std::to_string(entries_.back().frame_index));
    }
    if (frame_index < 0) {
        throw StreamDiscontinuityError("cache push: negative frame index");
    }
    std::size_t floats = 0;
    for (const auto& b : kv) {
        if (b.frame_index != frame_index) {
            throw ContractError("cache push: block data tagged with a different frame index");
        }
        floats += b.float_count();
    }
    entries_.push_back(Entry{frame_index, std::move(kv)});
    resident_ += floats;
    while (entries_.size() > capacity_) {
        for (const auto& b : entries_.front().blocks) {
            resident_ -= b.float_count();
        }
        entries_.pop_front();
    }
}

void SlidingCache::reset() {
    entries_.clear();
    resident_ = 0;
}

std::vector<std::int64_t> SlidingCache::indices() const {
    std::vector<std::int64_t> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) {
        out.push_back(e.frame_index);
    }
    return out;
}

std::vector<BlockCacheView> SlidingCache::view(std::size_t blocks) const {
    std::vector<BlockCacheView> views(blocks);
    for (const auto& e : entries_) {
        if (e.blocks.size() != blocks) {
            throw ContractError("cache view: entry block count does not match the model");
        }
        for (std::size_t b = 0; b < blocks; ++b) {
            views[b].push_back(&e.blocks[b]);
        }
    }
    return views;
}

void fifo_update(SlidingCache& cache, std::int64_t frame_index, std::vector<FrameKV> kv) {
    cache.push(frame_index, std::move(kv));
}

std::uint64_t CostLedger::cumulative_flops(std::size_t frames) const {
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < std::min(frames, rows.size()); ++i) {
        total += rows[i].flops;
    }
    return total;
}

void CostLedger::write_csv(const std::filesystem::path& path) const {
    CsvWriter csv(path, "ledger/1", {"frame_index", "flops", "peak_cache_elements", "wall_ns"});
    for (const auto& r : rows) {
        csv.row({std::to_string(r.frame_index), std::to_string(r.flops), std::to_string(r.peak_cache_elements),
                 std::to_string(r.wall_ns)});
    }
}

FramePrediction stream_step(const Model& model, const FrameInput& frame, SlidingCache& cache, FlopCounter* counter) {
    BlockContext ctx{&model.config, cache.capacity(), counter};
    const std::int64_t t = frame.timestep;
    if (!cache.empty() && t != cache.indices().back() + 1) {
        throw StreamDiscontinuityError("stream_step: frame " + std::to_string(t) + " does not follow cached frame " +
                                       std::to_string(cache.indices().back()));
    }
    const TokenSet tokens = encode(frame, model.encoder, model.config, counter);
    auto stack = run_stack(tokens, cache.view(model.blocks.size()), model.blocks, t, ctx);
    FramePrediction pred = model.predict(stack.tokens, t, counter);
    fifo_update(cache, t, std::move(stack.kv));
    return pred;
}

namespace {

DriveResult drive_streaming(const Model& model, std::span<const FrameInput> frames, SlidingCache cache) {
    DriveResult res;
    for (const auto& f : frames) {
        FlopCounter counter;
        const auto start = Clock::now();
        res.predictions.push_back(stream_step(model, f, cache, &counter));
        res.ledger.rows.push_back({f.timestep, counter.flops, cache.resident_elements(), elapsed_ns(start)});
    }
    return res;
}

} // namespace

DriveResult drive_windowed(const Model& model, std::span<const FrameInput> frames, std::size_t window) {
    if (window < 1) {
        throw ConfigError("window must be >= 1");
    }
    return drive_streaming(model, frames, SlidingCache(window));
}

DriveResult drive_fullhistory(const Model& model, std::span<const FrameInput> frames) {
    return drive_streaming(model, frames, SlidingCache::unbounded());
}

std::vector<TokenSet> joint_stack(const Model& model, std::span<const FrameInput> frames, std::size_t window,
                                  FlopCounter* counter, std::size_t* peak_elements) {
    const auto& config = model.config;
    const auto T = static_cast<std::int64_t>(frames.size());
    if (T == 0) {
        return {};
    }
    std::vector<Tensor> x;
    TokenLayout layout;
    for (std::int64_t s = 0; s < T; ++s) {
        const auto& f = frames[static_cast<std::size_t>(s)];
        if (f.timestep != s) {
            throw StreamDiscontinuityError("joint_stack: frames must be indexed 0..T-1");
        }
        const TokenSet ts = encode(f, model.encoder, config, counter);
        layout = ts.layout;
        x.push_back(ts.flat());
    }
    const std::int64_t n = layout.total();
    for (const auto& block : model.blocks) {
        std::vector<sublayer::Projection> projs;
        for (std::int64_t s = 0; s < T; ++s) {
            auto& xs = x[static_cast<std::size_t>(s)];
            xs = sublayer::intra_view(xs, block, layout, config, counter);
            xs = sublayer::cross_view(xs, block, layout, config, counter);
            projs.push_back(sublayer::temporal_project(xs, block, s, (T - 1) - s, config, counter));
        }
        const Tensor q = stack_heads(projs, &sublayer::Projection::q);
        const Tensor k = stack_heads(projs, &sublayer::Projection::k);
        const Tensor v = stack_heads(projs, &sublayer::Projection::v);
        const Tensor attn = masked_joint_attention(q, k, v, n, window, counter);
        for (std::int64_t s = 0; s < T; ++s) {
            auto& xs = x[static_cast<std::size_t>(s)];
            xs = sublayer::residual_out(xs, frame_slice(attn, s, n), block.temporal, counter);
            xs = sublayer::mlp(xs, block.mlp, counter);
        }
    }
    if (peak_elements) {
        *peak_elements = static_cast<std::size_t>(T) * model.frame_cache_floats();
    }
    std::vector<TokenSet> out;
    out.reserve(x.size());
    for (const auto& xs : x) {
        out.push_back(TokenSet::from_flat(xs, layout));
    }
    return out;
}

DriveResult drive_batch(const Model& model, std::span<const FrameInput> frames, std::size_t window) {
    if (window < 1) {
        throw ConfigError("window must be >= 1");
    }
    DriveResult res;
    for (std::size_t t = 0; t < frames.size(); ++t) {
        FlopCounter counter;
        std::size_t peak = 0;
        const auto start = Clock::now();
        const auto tokens = joint_stack(model, frames.first(t + 1), window, &counter, &peak);
        res.predictions.push_back(model.predict(tokens.back(), static_cast<std::int64_t>(t), &counter));
        res.ledger.rows.push_back({static_cast<std::int64_t>(t), counter.flops, peak, elapsed_ns(start)});
    }
    return res;
}

EquivalenceReport check_equivalence(const Model& model, std::span<const FrameInput> frames, std::size_t window) {
    EquivalenceReport report;
    report.truncated_baseline = window < frames.size();
    const auto streamed = drive_windowed(model, frames, window);
    const auto batch = drive_batch(model, frames, report.truncated_baseline ? window : kUnbounded);
    for (std::size_t t = 0; t < frames.size(); ++t) {
        const auto& a = streamed.predictions[t];
        const auto& b = batch.predictions[t];
        Compare cmp{&report, static_cast<std::int64_t>(t)};
        cmp("tokens", a.tokens.data(), b.tokens.data());
        cmp("pointmaps", a.pointmaps.data(), b.pointmaps.data());
        cmp("pose", prediction_vector(a, true), prediction_vector(b, true));
        cmp("trajectory", prediction_vector(a, false), prediction_vector(b, false));
        report.frame_errors.push_back(cmp.frame_max);
    }
    report.pass = report.max_error <= report.tolerance;
    return report;
}

std::string format_report(const EquivalenceReport& r) {
    std::ostringstream os;
    os << (r.pass ? "PASS" : "FAIL") << " streaming vs "
       << (r.truncated_baseline ? "window-masked" : "causal") << " joint processing\n";
    os << "  max normalized error " << r.max_error << " (tolerance " << r.tolerance << ")\n";
    os << "  worst element: frame " << r.worst_frame << ", " << r.worst_field << "[" << r.worst_element
       << "] stream=" << r.worst_stream_value << " batch=" << r.worst_batch_value << '\n';
    for (std::size_t t = 0; t < r.frame_errors.size(); ++t) {
        os << "  frame " << t << ": " << r.frame_errors[t] << '\n';
    }
    return os.str();
}

} // namespace streamgeo
