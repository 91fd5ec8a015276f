#pragma once

// Overlapped block sampler: anchors drawn uniformly with replacement from the
// valid range, blocks allowed to overlap. Each sample carries the K-step
// block, the conditioning state at the anchor and the real-data decision
// chain.
//
// PanelContext precomputes conditioning states and real chains for every
// valid anchor once (the "prepare" loop of the training procedure), so that
// drawing a block is an index lookup.

#include "datcgan/decision.hpp"
#include "datcgan/markets.hpp"

#include <vector>

namespace datcgan::markets {

struct BlockSample {
    int t = -1;      // anchor; block rows are panel rows t+1..t+K
    Mat real_block;  // K x d
    ConditioningState conditioning;
    std::vector<decision::ChainStep> decision_quantities;  // chain on the real block
};

struct AnchorRange {
    int lo = 0;  // inclusive
    int hi = 0;  // inclusive

    int size() const { return hi < lo ? 0 : hi - lo + 1; }
    bool contains(int t) const { return t >= lo && t <= hi; }
};

inline AnchorRange valid_anchor_range(const ReturnPanel& panel, int K, const Windows& windows) {
    return AnchorRange{max_window(windows), panel.T() - 1 - K};
}

class PanelContext {
public:
    PanelContext(const ReturnPanel& panel, int K, const Windows& windows,
                 const decision::DecisionParams& params)
        : PanelContext(panel, K, windows, params, valid_anchor_range(panel, K, windows)) {}

    // `anchors` may restrict to a sub-range (e.g. a held-out evaluation
    // window); it is clamped to the structurally valid range.
    PanelContext(const ReturnPanel& panel, int K, const Windows& windows,
                 const decision::DecisionParams& params, AnchorRange anchors)
        : panel_(&panel), K_(K), windows_(windows), params_(params) {
        const AnchorRange valid = valid_anchor_range(panel, K, windows);
        range_.lo = std::max(anchors.lo, valid.lo);
        range_.hi = std::min(anchors.hi, valid.hi);
        require(range_.size() >= 1, "empty anchor range (panel too short for K and windows)");

        cond_.reserve(range_.size());
        chains_.reserve(range_.size());
        MAState ma = MAState::zero(panel.d(), params.zeta);
        for (int t = 0; t <= range_.hi; ++t) {
            ma.fold(panel.row(t));
            if (t < range_.lo) continue;
            ConditioningState c;
            c.t = t;
            c.ma_state = ma;
            c.features = Mat(panel.d(), 5);
            c.features.col(0) = panel.returns.row(t).transpose();
            for (int wi = 0; wi < 4; ++wi) {
                const int w = windows[wi];
                c.features.col(wi + 1) =
                    panel.returns.middleRows(t - w + 1, w).colwise().mean().transpose();
            }
            chains_.push_back(decision::decision_chain(real_block(t), c, params));
            cond_.push_back(std::move(c));
        }
    }

    const ReturnPanel& panel() const { return *panel_; }
    int K() const { return K_; }
    AnchorRange range() const { return range_; }

    Mat real_block(int t) const {
        require(range_.contains(t), "anchor outside range");
        return panel_->returns.middleRows(t + 1, K_);
    }

    const ConditioningState& conditioning(int t) const {
        require(range_.contains(t), "anchor outside range");
        return cond_[t - range_.lo];
    }

    const std::vector<decision::ChainStep>& real_chain(int t) const {
        require(range_.contains(t), "anchor outside range");
        return chains_[t - range_.lo];
    }

    int draw_anchor(Rng& rng) const {
        return range_.lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(range_.size())));
    }

    std::vector<int> draw_anchors(int count, Rng& rng) const {
        std::vector<int> a(count);
        for (int& t : a) t = draw_anchor(rng);
        return a;
    }

private:
    const ReturnPanel* panel_;
    int K_;
    Windows windows_;
    decision::DecisionParams params_;
    AnchorRange range_;
    std::vector<ConditioningState> cond_;
    std::vector<std::vector<decision::ChainStep>> chains_;
};

inline std::vector<BlockSample> sample_blocks(const ReturnPanel& panel, int I, int K, const Windows& windows,
                                              const decision::DecisionParams& params, Rng& rng) {
    require(I >= 1, "sample_blocks: batch size must be >= 1");
    require(K >= 1, "sample_blocks: K must be >= 1");
    PanelContext ctx(panel, K, windows, params);
    std::vector<BlockSample> out;
    out.reserve(I);
    for (int i = 0; i < I; ++i) {
        BlockSample s;
        s.t = ctx.draw_anchor(rng);
        s.real_block = ctx.real_block(s.t);
        s.conditioning = ctx.conditioning(s.t);
        s.decision_quantities = ctx.real_chain(s.t);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace datcgan::markets
