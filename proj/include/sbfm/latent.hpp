#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sbfm {

// Joint latent vector partitioned into an audio block followed by a video
// block. The concat order [audio, video] is fixed; all flow/score operations
// act on the joint view, the modality heads act on the blocks.
class LatentState {
public:
    LatentState() = default;

    LatentState(std::size_t d_a, std::size_t d_v) : data_(d_a + d_v, 0.0), d_a_(d_a) {
        if (d_a == 0 || d_v == 0)
            throw std::invalid_argument("LatentState: both blocks must be non-empty");
    }

    static LatentState from_blocks(std::vector<double> audio, std::vector<double> video) {
        LatentState s(audio.size(), video.size());
        std::copy(audio.begin(), audio.end(), s.data_.begin());
        std::copy(video.begin(), video.end(), s.data_.begin() + static_cast<std::ptrdiff_t>(s.d_a_));
        return s;
    }

    std::size_t dim() const noexcept { return data_.size(); }
    std::size_t d_a() const noexcept { return d_a_; }
    std::size_t d_v() const noexcept { return data_.size() - d_a_; }

    std::span<double> joint() noexcept { return data_; }
    std::span<const double> joint() const noexcept { return data_; }
    std::span<double> audio() noexcept { return {data_.data(), d_a_}; }
    std::span<const double> audio() const noexcept { return {data_.data(), d_a_}; }
    std::span<double> video() noexcept { return {data_.data() + d_a_, d_v()}; }
    std::span<const double> video() const noexcept { return {data_.data() + d_a_, d_v()}; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    bool same_partition(const LatentState& other) const noexcept {
        return d_a_ == other.d_a_ && data_.size() == other.data_.size();
    }

    friend bool operator==(const LatentState& a, const LatentState& b) {
        return a.d_a_ == b.d_a_ && a.data_ == b.data_;
    }

private:
    std::vector<double> data_;
    std::size_t d_a_ = 0;
};

inline void require_same_partition(const LatentState& a, const LatentState& b,
                                   const char* where) {
    if (!a.same_partition(b))
        throw std::invalid_argument(std::string(where) + ": latent partition mismatch (" +
                                    std::to_string(a.d_a()) + "+" + std::to_string(a.d_v()) +
                                    " vs " + std::to_string(b.d_a()) + "+" +
                                    std::to_string(b.d_v()) + ")");
}

// Source/target endpoints of one edit: x0 is the full mixture, x1 the mixture
// with one component removed. Both share the same block partition.
struct EndpointPair {
    LatentState x0;
    LatentState x1;

    EndpointPair(LatentState source, LatentState target)
        : x0(std::move(source)), x1(std::move(target)) {
        require_same_partition(x0, x1, "EndpointPair");
    }
};

// Conditioning inputs: phi_a identifies what to remove (orthonormal code in
// the toy setup), phi_v is a mask-gated summary of the source video block.
struct ConditionEmbedding {
    std::vector<double> phi_a;
    std::vector<double> phi_v;
};

}  // namespace sbfm
