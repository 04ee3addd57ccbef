#include "fieldloom/segment.hpp"

#include "fieldloom/errors.hpp"
#include "fieldloom/recon.hpp"
#include "fieldloom/rng.hpp"
#include "text_util.hpp"

namespace fieldloom {

SegmentedImage fit_mask(const BinaryRaster& mask, const SegmentOptions& options, std::size_t index) {
    options.arch.validate();
    if (options.arch.input_dim != 2) throw UsageError("mask fields are two-dimensional");
    const std::uint64_t seed = Rng(options.seed, Stream::pixels, index).next();
    const std::size_t n = options.samples ? options.samples : mask.size();

    const auto pixels = sample_pixels_from_mask(mask, n, seed);
    const auto split = split_random(pixels, options.test_frac, options.val_frac, seed);
    const auto train_raw = pixels.subset(split.indices(Partition::train));
    const auto val_raw = pixels.subset(split.indices(Partition::val));

    SegmentedImage out;
    out.index = index;
    out.norm = fit_normalizer(train_raw);
    TrainConfig cfg = options.train;
    cfg.seed = seed;
    auto result = train(init_params(options.arch, seed), apply_normalizer(out.norm, train_raw),
                        apply_normalizer(out.norm, val_raw), cfg);
    out.model = std::move(result.model);
    out.trace = std::move(result.trace);
    out.probs = reconstruct_probability(out.model, out.norm, mask.width(), mask.height(), options.threads);
    out.t_star = best_dice_threshold(out.probs, mask);
    return out;
}

namespace {

void add_overlap(MetricReport& r, const BinaryRaster& pred, const BinaryRaster& gt, const std::vector<int>& tolerances) {
    const auto m = dice_iou(pred, gt);
    r.set("dice", m.dice);
    r.set("iou", m.iou);
    r.set("f1", m.f1);
    r.set("precision", m.precision);
    r.set("recall", m.recall);
    for (int t : tolerances) r.set("boundary_f1_" + std::to_string(t) + "px", boundary_f1(pred, gt, t));
}

}  // namespace

SegmentationResult segment_masks(std::span<const BinaryRaster> masks, const SegmentOptions& options) {
    if (masks.empty()) throw UsageError("segmentation needs at least one mask");
    SegmentationResult out;
    std::vector<ProbabilityImage> probs;
    std::vector<BinaryRaster> gts;
    for (std::size_t i = 0; i < masks.size(); ++i) {
        if (masks[i].degenerate()) {
            out.excluded.push_back(i);
            continue;
        }
        out.images.push_back(fit_mask(masks[i], options, i));
        probs.push_back(out.images.back().probs);
        gts.push_back(masks[i]);
    }
    if (out.images.empty()) throw DataError("every mask is degenerate");
    out.thresholds = select_thresholds(probs, gts);
    const double tg = out.thresholds.global;

    std::vector<MetricReport> reports;
    for (std::size_t k = 0; k < out.images.size(); ++k) {
        const auto& img = out.images[k];
        MetricReport r;
        r.set_meta("image", std::to_string(img.index));
        r.set_meta("threshold", "t_global");
        r.set("t_star", img.t_star);
        r.set("t_global", tg);
        r.set("dice_at_t_star", dice_iou(img.probs.threshold(img.t_star), gts[k]).dice);
        r.set("dice_at_05", dice_iou(img.probs.threshold(0.5), gts[k]).dice);
        add_overlap(r, img.probs.threshold(tg), gts[k], options.tolerances);
        out.per_image.push_back(std::move(r));
    }

    out.summary.set_meta("images", std::to_string(out.images.size()));
    out.summary.set_meta("excluded_degenerate", std::to_string(out.excluded.size()));
    out.summary.set_meta("threshold", "t_global");
    for (const auto& e : out.per_image.front().entries) {
        double sum = 0.0;
        for (const auto& r : out.per_image) sum += r.value(e.name);
        out.summary.set(e.name, sum / static_cast<double>(out.per_image.size()));
    }
    out.summary.set("t_global", tg);
    return out;
}

}  // namespace fieldloom
