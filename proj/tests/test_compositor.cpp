// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "compogen/compositor.hpp"
#include "compogen/error.hpp"
#include "compogen/mock_backends.hpp"
#include "oracles.hpp"

using namespace compogen;

namespace {

Errc code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no compogen::Error thrown";
    return Errc::Precondition;
}

// RGBA image of size w x h whose opaque region is the rectangle r, coloured
// by a position-dependent pattern so misplacements are visible.
Image rgba_with_object(int w, int h, PixelRect r) {
    Image img(w, h, 4);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            img.at(x, y, 0) = (x % 7) / 7.0;
            img.at(x, y, 1) = (y % 5) / 5.0;
            img.at(x, y, 2) = 0.5;
            const bool in = x >= r.x && x < r.x + r.width && y >= r.y && y < r.y + r.height;
            img.at(x, y, 3) = in ? 1.0 : 0.0;
        }
    }
    return img;
}

oracle::Grid to_grid(const Image& m) {
    oracle::Grid g(static_cast<std::size_t>(m.height()), std::vector<double>(static_cast<std::size_t>(m.width())));
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            g[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)] = m.at(x, y);
        }
    }
    return g;
}

}  // namespace

TEST(ExtractAsset, CutsOutTheSegmentedObject) {
    const Image img = rgba_with_object(20, 10, PixelRect{3, 2, 5, 4});
    const ForegroundAsset a = extract_asset(img, MockSegmenter(), "cat", "cat/0.png");
    EXPECT_EQ(a.concept_id, "cat");
    EXPECT_EQ(a.tight_bbox, (PixelRect{3, 2, 5, 4}));
    EXPECT_EQ(a.cutout.channels(), 4);
    EXPECT_EQ(a.cutout.at(4, 3, 3), 1.0);
    EXPECT_EQ(a.cutout.at(0, 0, 3), 0.0);
    EXPECT_EQ(a.cutout.at(4, 3, 0), img.at(4, 3, 0));
    EXPECT_EQ(code_of([] { extract_asset(Image(4, 4, 4, 0.0), MockSegmenter()); }), Errc::EmptySegmentation);
}

TEST(TightBbox, EmptyAndFull) {
    EXPECT_TRUE(tight_bbox(Image(3, 3, 1)).empty());
    EXPECT_EQ(tight_bbox(Image(3, 2, 1, 1.0)), (PixelRect{0, 0, 3, 2}));
}

TEST(InnerRect, KeepsOnlyWholePixels) {
    EXPECT_EQ(inner_rect(BoundingBox{"a", 1.5, 2.0, 3.0, 2.9}, Canvas{10, 10}), (PixelRect{2, 2, 2, 2}));
    EXPECT_EQ(inner_rect(BoundingBox{"a", 8, 8, 5, 5}, Canvas{10, 10}), (PixelRect{8, 8, 2, 2}));
    EXPECT_TRUE(inner_rect(BoundingBox{"a", 1.2, 1.2, 0.5, 0.5}, Canvas{10, 10}).empty());
}

TEST(PlaceForegrounds, ExactFitCopiesPixelsVerbatim) {
    const Image img = rgba_with_object(16, 16, PixelRect{4, 4, 6, 3});
    const ForegroundAsset a = extract_asset(img, MockSegmenter(), "a");
    const Layout layout{"c", {32, 32}, {{"a", 10, 20, 6, 3}}, LayoutSource::Llm};
    const CompositeCanvas out = place_foregrounds(std::span(&a, 1), layout);
    for (int y = 0; y < 32; ++y) {
        for (int x = 0; x < 32; ++x) {
            const bool in = x >= 10 && x < 16 && y >= 20 && y < 23;
            ASSERT_EQ(out.fg_mask.at(x, y), in ? 1.0 : 0.0) << x << "," << y;
            for (int c = 0; c < 3; ++c) {
                const double expected = in ? img.at(x - 10 + 4, y - 20 + 4, c) : 0.0;
                ASSERT_EQ(out.fg_image.at(x, y, c), expected);
            }
        }
    }
}

TEST(PlaceForegrounds, ScaledObjectIsCentredInsideItsBox) {
    // A 40x20 opaque object into a 30x30 box: scale 0.75 -> 30x15, centred vertically.
    const Image img = rgba_with_object(50, 30, PixelRect{5, 5, 40, 20});
    const ForegroundAsset a = extract_asset(img, MockSegmenter(), "a");
    const Layout layout{"c", {64, 64}, {{"a", 10, 10, 30, 30}}, LayoutSource::Llm};
    const CompositeCanvas out = place_foregrounds(std::span(&a, 1), layout);
    const PixelRect placed = tight_bbox(out.fg_mask);
    EXPECT_EQ(placed, (PixelRect{10, 17, 30, 15}));
    for (double v : out.fg_mask.data()) {
        EXPECT_TRUE(v == 0.0 || v == 1.0);
    }
}

TEST(PlaceForegrounds, LaterBoxesPaintOverEarlierOnes) {
    Image red(8, 8, 4, 0.0);
    Image blue(8, 8, 4, 0.0);
    for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
            red.at(x, y, 0) = 1.0;
            red.at(x, y, 3) = 1.0;
            blue.at(x, y, 2) = 1.0;
            blue.at(x, y, 3) = 1.0;
        }
    }
    const std::vector<ForegroundAsset> assets{extract_asset(red, MockSegmenter(), "r"),
                                              extract_asset(blue, MockSegmenter(), "b")};
    const Layout layout{"c", {16, 16}, {{"r", 0, 0, 8, 8}, {"b", 4, 4, 8, 8}}, LayoutSource::Llm};
    const CompositeCanvas out = place_foregrounds(assets, layout);
    EXPECT_EQ(out.fg_image.at(1, 1, 0), 1.0);
    EXPECT_EQ(out.fg_image.at(5, 5, 0), 0.0);
    EXPECT_EQ(out.fg_image.at(5, 5, 2), 1.0);
    EXPECT_EQ(out.fg_mask.at(15, 15), 0.0);
}

TEST(PlaceForegrounds, RejectsMismatchedInputs) {
    const ForegroundAsset a = extract_asset(rgba_with_object(8, 8, PixelRect{0, 0, 4, 4}), MockSegmenter(), "a");
    const Layout two{"c", {16, 16}, {{"a", 0, 0, 4, 4}, {"b", 8, 8, 4, 4}}, LayoutSource::Llm};
    EXPECT_EQ(code_of([&] { place_foregrounds(std::span(&a, 1), two); }), Errc::Precondition);
    const Layout other{"c", {16, 16}, {{"b", 0, 0, 4, 4}}, LayoutSource::Llm};
    EXPECT_EQ(code_of([&] { place_foregrounds(std::span(&a, 1), other); }), Errc::Precondition);
}

TEST(SmoothMask, MatchesBruteForceWindowedMean) {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> dim(1, 40);
    std::uniform_real_distribution<double> val(0.0, 1.0);
    for (int t = 0; t < 30; ++t) {
        const int w = dim(rng);
        const int h = dim(rng);
        Image m(w, h, 1);
        for (auto& v : m.data()) {
            v = t % 2 ? val(rng) : (val(rng) < 0.5 ? 0.0 : 1.0);
        }
        for (int window : {1, 3, 5, 7}) {
            const SoftMask s = smooth_mask(m, window);
            const auto ref = oracle::windowed_mean(to_grid(m), window);
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    ASSERT_NEAR(s.values.at(x, y), ref[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)],
                                1e-12);
                }
            }
        }
    }
}

TEST(SmoothMask, ConstantMasksAreFixedPoints) {
    for (double c : {0.0, 1.0}) {
        const SoftMask s = smooth_mask(Image(9, 7, 1, c));
        for (double v : s.values.data()) {
            EXPECT_EQ(v, c);
        }
    }
}

TEST(SmoothMask, RejectsBadInput) {
    EXPECT_EQ(code_of([] { smooth_mask(Image(4, 4, 1), 4); }), Errc::Precondition);
    EXPECT_EQ(code_of([] { smooth_mask(Image(4, 4, 1), 0); }), Errc::Precondition);
    EXPECT_EQ(code_of([] { smooth_mask(Image(4, 4, 3)); }), Errc::Precondition);
    EXPECT_EQ(code_of([] { smooth_mask(Image(4, 4, 1, 1.5)); }), Errc::Precondition);
}

TEST(BackgroundLibrary, LoadsSelectsAndBreaksTies) {
    const auto dir = oracle::scratch_dir("bg-lib");
    std::ofstream(dir / "index.json") << R"({"entries": [
        {"id": "b-street", "path": "street.png", "tags": ["street", "city road"]},
        {"id": "a-garden", "path": "sub/garden.png", "tags": ["garden", "grass"]},
        {"id": "c-plain", "path": "plain.png"}
    ]})";
    const BackgroundLibrary lib = load_background_library(dir / "index.json");
    ASSERT_EQ(lib.entries.size(), 3u);
    EXPECT_EQ(lib.entries[1].path, dir / "sub/garden.png");
    EXPECT_EQ(select_background("on the street", lib).id, "b-street");
    EXPECT_EQ(select_background("in the Garden, on the grass", lib).id, "a-garden");
    // No tag matches: every entry scores zero and the smallest id wins.
    EXPECT_EQ(select_background("on the moon", lib).id, "a-garden");
    const std::vector<std::string> tags{"city road", "road"};
    EXPECT_EQ(keyword_overlap("a city road", tags), 2);
    EXPECT_EQ(keyword_overlap("a road", tags), 1);
    EXPECT_EQ(code_of([] { select_background("x", BackgroundLibrary{}); }), Errc::NoBackgroundAvailable);
    EXPECT_EQ(code_of([&] { load_background_library(dir / "none.json"); }), Errc::Io);
}

TEST(FitBackground, ResizesToCanvasAsRgb) {
    const Image bg = fit_background(Image(40, 30, 4, 0.5), Canvas{20, 10});
    EXPECT_EQ(bg.width(), 20);
    EXPECT_EQ(bg.height(), 10);
    EXPECT_EQ(bg.channels(), 3);
    EXPECT_EQ(code_of([] { fit_background(Image(), Canvas{4, 4}); }), Errc::Precondition);
}

TEST(Repaint, MockInpaintBlendsExactlyAndComplementSwaps) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> val(0.0, 1.0);
    const int w = 23;
    const int h = 17;
    CompositeCanvas canvas{Image(w, h, 3), Image(w, h, 1), ""};
    Image bg(w, h, 3);
    Image m(w, h, 1);
    for (auto& v : canvas.fg_image.data()) {
        v = val(rng);
    }
    for (auto& v : bg.data()) {
        v = val(rng);
    }
    for (auto& v : m.data()) {
        v = val(rng);
    }
    Image complement(w, h, 1);
    for (std::size_t i = 0; i < m.data().size(); ++i) {
        complement.data()[i] = 1.0 - m.data()[i];
    }
    const MockInpainter inpainter;
    const Image out = repaint(canvas, SoftMask{m, 5}, bg, "p", inpainter, 1);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                const double mv = m.at(x, y);
                ASSERT_EQ(out.at(x, y, c), mv * canvas.fg_image.at(x, y, c) + (1.0 - mv) * bg.at(x, y, c));
            }
        }
    }
    // Swapping foreground and background and complementing the mask gives the
    // same image up to one rounding step.
    const CompositeCanvas swapped{bg, Image(w, h, 1), ""};
    const Image out2 = repaint(swapped, SoftMask{complement, 5}, canvas.fg_image, "p", inpainter, 1);
    for (std::size_t i = 0; i < out.data().size(); ++i) {
        ASSERT_NEAR(out.data()[i], out2.data()[i], 1e-15);
    }
    EXPECT_EQ(code_of([&] { repaint(canvas, SoftMask{Image(2, 2, 1), 5}, bg, "p", inpainter, 1); }),
              Errc::Precondition);
}
