#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "oracles/synthetic_triplet.hpp"
#include "reshape/dataset/triplet.hpp"

using namespace reshape;
using namespace reshape::dataset;

namespace {

Mask rows_mask(int w, int h, int first, int last, int left, int right) {
    Mask m(w, h, 1);
    for (int y = first; y <= last; ++y) {
        for (int x = left; x <= right; ++x) m.at(x, y) = 255;
    }
    return m;
}

// Extent by listing every occupied pixel.
MaskExtent scan_extent(const Mask& m) {
    std::vector<std::pair<int, int>> on;
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
            if (m.at(x, y)) on.emplace_back(x, y);
        }
    }
    int top = m.height, bottom = -1, left = m.width, right = -1;
    for (auto [x, y] : on) {
        top = std::min(top, y), bottom = std::max(bottom, y);
        left = std::min(left, x), right = std::max(right, x);
    }
    std::vector<int> cols;
    for (auto [x, y] : on) {
        if (y == bottom) cols.push_back(x);
    }
    const int lo = *std::min_element(cols.begin(), cols.end());
    const int hi = *std::max_element(cols.begin(), cols.end());
    return {bottom - top + 1, top, bottom, (lo + hi) / 2, left, right};
}

Mask random_blob(std::mt19937& rng, int w, int h) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Mask m(w, h, 1);
    const double cx = w * (0.3 + 0.4 * u(rng)), cy = h * (0.3 + 0.4 * u(rng));
    const double rx = w * (0.05 + 0.25 * u(rng)), ry = h * (0.05 + 0.25 * u(rng));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double dx = (x - cx) / rx, dy = (y - cy) / ry;
            if (dx * dx + dy * dy <= 1.0 + 0.3 * (u(rng) - 0.5)) m.at(x, y) = 255;
        }
    }
    return m;
}

Image8 noise_image(std::mt19937& rng, int w, int h, int channels) {
    Image8 img(w, h, channels);
    for (auto& v : img.data) v = static_cast<std::uint8_t>(rng() % 256);
    return img;
}

std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("reshape_dataset_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace

TEST(MaskExtent, RowsTwoToSeven) {
    const auto e = mask_extent(rows_mask(10, 10, 2, 7, 3, 6));
    EXPECT_EQ(e.height_px, 6);
    EXPECT_EQ(e.bottom_row, 7);
    EXPECT_EQ(e.top_row, 2);
    EXPECT_EQ(e.bottom_center_col, 4);
}

TEST(MaskExtent, SinglePixel) {
    Mask m(9, 5, 1);
    m.at(6, 3) = 1;
    const auto e = mask_extent(m);
    EXPECT_EQ(e.height_px, 1);
    EXPECT_EQ(e.bottom_row, 3);
    EXPECT_EQ(e.bottom_center_col, 6);
}

TEST(MaskExtent, RandomBlobsMatchScan) {
    std::mt19937 rng(1);
    for (int i = 0; i < 50; ++i) {
        const Mask m = random_blob(rng, 40 + i, 60 - i / 2);
        EXPECT_EQ(mask_extent(m), scan_extent(m)) << "blob " << i;
    }
}

TEST(MaskExtent, EmptyMaskThrows) { EXPECT_THROW(mask_extent(Mask(4, 4, 1)), ValueError); }

TEST(ScaleToReference, SameHeightIsIdentity) {
    std::mt19937 rng(2);
    const Mask m = random_blob(rng, 50, 60);
    const Image8 img = noise_image(rng, 50, 60, 3);
    const auto e = mask_extent(m);
    const auto cut = scale_to_reference(img, m, e.height_px);
    ASSERT_EQ(cut.mask.width, e.width_px());
    ASSERT_EQ(cut.mask.height, e.height_px);
    for (int y = 0; y < cut.mask.height; ++y) {
        for (int x = 0; x < cut.mask.width; ++x) {
            EXPECT_EQ(cut.mask.at(x, y) != 0, m.at(e.left_col + x, e.top_row + y) != 0);
            for (int c = 0; c < 3; ++c) EXPECT_EQ(cut.image.at(x, y, c), img.at(e.left_col + x, e.top_row + y, c));
        }
    }
}

TEST(ScaleToReference, HalvingHeightLandsOnReference) {
    std::mt19937 rng(3);
    const Mask m = rows_mask(80, 120, 10, 109, 20, 57);  // height 100, width 38
    const auto cut = scale_to_reference(noise_image(rng, 80, 120, 3), m, 50);
    const auto e = mask_extent(cut.mask);
    EXPECT_TRUE(e.height_px == 50 || e.height_px == 51) << e.height_px;
    EXPECT_EQ(e.width_px(), 19);
}

TEST(ScaleToReference, HeightAndAspectBoundsOnRandomBlobs) {
    std::mt19937 rng(4);
    std::uniform_int_distribution<int> ref(5, 150);
    for (int i = 0; i < 100; ++i) {
        const Mask m = random_blob(rng, 70, 90);
        const Image8 img = noise_image(rng, 70, 90, 3);
        const int r = ref(rng);
        const auto before = mask_extent(m);
        const auto cut = scale_to_reference(img, m, r);
        const auto after = mask_extent(cut.mask);
        EXPECT_LE(std::abs(after.height_px - r), 1) << "ref " << r;
        const double ratio_before = static_cast<double>(before.width_px()) / before.height_px;
        const double ratio_after = static_cast<double>(after.width_px()) / after.height_px;
        EXPECT_LE(std::abs(ratio_after - ratio_before), 2.0 / r) << "ref " << r;
        EXPECT_TRUE(std::all_of(cut.mask.data.begin(), cut.mask.data.end(), [](auto v) { return v == 0 || v == 255; }));
    }
}

TEST(ScaleToReference, ErrorsOnBadInput) {
    EXPECT_THROW(scale_to_reference(Image8(4, 4, 3), Mask(4, 4, 1), 10), ValueError);
    EXPECT_THROW(scale_to_reference(Image8(4, 4, 3), rows_mask(4, 4, 1, 2, 1, 2), 0), ValueError);
    EXPECT_THROW(scale_to_reference(Image8(5, 4, 3), rows_mask(4, 4, 1, 2, 1, 2), 3), DimensionError);
}

TEST(Composite, EmptyMaskLeavesBackground) {
    std::mt19937 rng(5);
    const Image8 bg = noise_image(rng, 30, 20, 3);
    const Cutout cut{noise_image(rng, 5, 5, 3), Mask(5, 5, 1)};
    const auto out = composite(bg, cut, MaskExtent{5, 10, 14, 15, 13, 17});
    EXPECT_EQ(out.image, bg);
    EXPECT_FALSE(out.clipped);
}

TEST(Composite, FullMaskReplacesRegionAndAnchorsBottom) {
    std::mt19937 rng(6);
    const Image8 bg = noise_image(rng, 30, 20, 3);
    const Cutout cut{noise_image(rng, 6, 4, 3), Mask(6, 4, 1, 255)};
    const MaskExtent anchor{4, 0, 15, 12, 0, 0};
    const auto out = composite(bg, cut, anchor);
    // Own anchor: bottom row 3, centre column (0 + 5) / 2 = 2.
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 6; ++x) {
            for (int c = 0; c < 3; ++c) EXPECT_EQ(out.image.at(10 + x, 12 + y, c), cut.image.at(x, y, c));
        }
    }
    EXPECT_EQ(out.image.at(9, 12, 0), bg.at(9, 12, 0));
    const auto e = mask_extent(out.mask);
    EXPECT_EQ(e.bottom_row, anchor.bottom_row);
    EXPECT_EQ(e.bottom_center_col, anchor.bottom_center_col);
}

TEST(Composite, RandomBlobsLandOnAnchor) {
    std::mt19937 rng(7);
    for (int i = 0; i < 30; ++i) {
        const Mask m = random_blob(rng, 30, 40);
        const Image8 img = noise_image(rng, 30, 40, 3);
        const auto cut = scale_to_reference(img, m, 20 + i);
        const MaskExtent anchor{0, 0, 150 - i, 300 + i, 0, 0};
        const auto out = composite(noise_image(rng, 600, 160, 3), cut, anchor);
        ASSERT_FALSE(out.clipped);
        const auto e = mask_extent(out.mask);
        EXPECT_EQ(e.bottom_row, anchor.bottom_row);
        EXPECT_EQ(e.bottom_center_col, anchor.bottom_center_col);
    }
}

TEST(Composite, OffCanvasPixelsAreFlagged) {
    const Cutout cut{Image8(10, 10, 1, 7), Mask(10, 10, 1, 255)};
    const auto out = composite(Image8(12, 12, 1), cut, MaskExtent{10, 0, 5, 1, 0, 0});
    EXPECT_TRUE(out.clipped);
    EXPECT_EQ(out.image.at(0, 0), 7);
}

TEST(NormalizeTriplet, HeightsAgreeAndThinIsUntouched) {
    for (int seed = 0; seed < 50; ++seed) {
        const Triplet t = oracle::synthetic_triplet(seed);
        const auto n = normalize_triplet(t);
        const auto& thin = n.triplet.members.at(BodyType::thin);
        EXPECT_EQ(thin.image, t.members.at(BodyType::thin).image);
        EXPECT_EQ(thin.mask, t.members.at(BodyType::thin).mask);
        const auto ref = mask_extent(thin.mask);
        for (auto type : {BodyType::fat, BodyType::muscular}) {
            const auto e = mask_extent(n.triplet.members.at(type).mask);
            EXPECT_LE(std::abs(e.height_px - ref.height_px), 1) << t.identity << " " << label(type);
            if (std::find(n.clipped.begin(), n.clipped.end(), type) == n.clipped.end()) {
                EXPECT_EQ(e.bottom_row, ref.bottom_row);
                EXPECT_EQ(e.bottom_center_col, ref.bottom_center_col);
            }
        }
    }
}

TEST(NormalizeTriplet, IdenticalMembersComeBackUnchanged) {
    Triplet t = oracle::synthetic_triplet(3);
    t.members[BodyType::fat] = t.members[BodyType::thin];
    t.members[BodyType::muscular] = t.members[BodyType::thin];
    const auto n = normalize_triplet(t);
    for (auto type : kBodyTypes) {
        const auto& a = n.triplet.members.at(type).image.data;
        const auto& b = t.members.at(type).image.data;
        for (std::size_t i = 0; i < a.size(); ++i) ASSERT_LE(std::abs(int(a[i]) - int(b[i])), 1) << label(type);
        EXPECT_EQ(n.triplet.members.at(type).mask, t.members.at(BodyType::thin).mask);
    }
}

TEST(NormalizeTriplet, IsIdempotent) {
    for (int seed = 10; seed < 20; ++seed) {
        const auto once = normalize_triplet(oracle::synthetic_triplet(seed)).triplet;
        const auto twice = normalize_triplet(once).triplet;
        for (auto type : kBodyTypes) {
            const auto& a = once.members.at(type);
            const auto& b = twice.members.at(type);
            EXPECT_EQ(a.mask, b.mask);
            for (std::size_t i = 0; i < a.image.data.size(); ++i) {
                ASSERT_LE(std::abs(int(a.image.data[i]) - int(b.image.data[i])), 1);
            }
        }
    }
}

TEST(NormalizeTriplet, RequiresThinAndMatchingSizes) {
    Triplet t = oracle::synthetic_triplet(1);
    Triplet no_thin = t;
    no_thin.members.erase(BodyType::thin);
    EXPECT_THROW(normalize_triplet(no_thin), ValueError);
    t.members[BodyType::fat].mask = Mask(3, 3, 1);
    EXPECT_THROW(normalize_triplet(t), DimensionError);
}

TEST(EnumeratePairs, FullTripletGivesSixOrderedPairs) {
    const auto pairs = enumerate_pairs("p7", {BodyType::thin, BodyType::fat, BodyType::muscular});
    std::vector<std::string> ids;
    for (const auto& p : pairs) ids.push_back(p.id);
    EXPECT_EQ(ids, (std::vector<std::string>{"p7/thin→fat", "p7/thin→muscular", "p7/fat→thin", "p7/fat→muscular",
                                             "p7/muscular→thin", "p7/muscular→fat"}));
}

TEST(EnumeratePairs, DatasetScaleCount) {
    std::size_t total = 0;
    for (int i = 0; i < 7615; ++i) total += enumerate_pairs("id" + std::to_string(i), {kBodyTypes.begin(), kBodyTypes.end()}).size();
    EXPECT_EQ(total, 45690u);
}

TEST(EnumeratePairs, CountIsOrderedPairsOfPresentMembers) {
    EXPECT_EQ(enumerate_pairs("a", {BodyType::fat, BodyType::muscular}).size(), 2u);
    EXPECT_THROW(enumerate_pairs("a", {BodyType::fat}), ValueError);
    EXPECT_THROW(enumerate_pairs("a", {}), ValueError);
}

TEST(Curation, EmptyFlagsKeepEverything) {
    auto pairs = enumerate_pairs("x", {kBodyTypes.begin(), kBodyTypes.end()});
    const auto r = apply_curation(pairs, {});
    EXPECT_EQ(r.total, 6u);
    EXPECT_EQ(r.kept, 6u);
    EXPECT_EQ(r.dropped, 0u);
}

TEST(Curation, FlaggingEverythingDropsEverything) {
    auto pairs = enumerate_pairs("x", {kBodyTypes.begin(), kBodyTypes.end()});
    std::vector<CurationFlag> flags;
    for (const auto& p : pairs) flags.push_back({p.id, "pose"});
    const auto r = apply_curation(pairs, flags);
    EXPECT_EQ(r.kept, 0u);
    EXPECT_EQ(r.dropped + r.kept, r.total);
    EXPECT_EQ(r.by_reason.at("pose"), 6u);
}

TEST(Curation, FixtureFlagsCountAndUnknownIds) {
    std::vector<TransformationPair> pairs;
    for (int i = 0; i < 20; ++i) {
        auto p = enumerate_pairs("id" + std::to_string(i), {kBodyTypes.begin(), kBodyTypes.end()});
        pairs.insert(pairs.end(), p.begin(), p.end());
    }
    std::mt19937 rng(8);
    std::vector<CurationFlag> flags;
    std::set<std::string> flagged;
    for (const auto& p : pairs) {
        if (rng() % 4 == 0) {
            flags.push_back({p.id, rng() % 2 ? "clothing" : "pose"});
            flagged.insert(p.id);
        }
    }
    flags.push_back(flags.front());  // repeated flag counts once
    auto r = apply_curation(pairs, flags);
    EXPECT_EQ(r.kept, pairs.size() - flagged.size());
    EXPECT_EQ(r.by_reason["clothing"] + r.by_reason["pose"], flagged.size());
    EXPECT_THROW(apply_curation(pairs, {{"nobody/thin→fat", "pose"}}), ValueError);
}

TEST(Manifest, TripletSaveLoadRoundTrip) {
    const auto dir = temp_dir("roundtrip");
    const Triplet t = oracle::synthetic_triplet(4);
    const TripletRecord rec = save_triplet(t, dir);
    write_manifest(dir / "manifest.jsonl", {rec});
    const auto records = read_manifest(dir / "manifest.jsonl");
    ASSERT_EQ(records.size(), 1u);
    EXPECT_EQ(records[0].identity, t.identity);
    const Triplet back = load_triplet(records[0], dir);
    EXPECT_EQ(back.background, t.background);
    for (auto type : kBodyTypes) {
        EXPECT_EQ(back.members.at(type).image, t.members.at(type).image);
        EXPECT_EQ(back.members.at(type).mask, t.members.at(type).mask);
    }
    std::filesystem::remove_all(dir);
}

TEST(Manifest, FlagsFileAndMalformedLines) {
    const auto dir = temp_dir("flags");
    {
        std::ofstream f(dir / "flags.jsonl");
        f << R"({"pair": "id1/thin→fat", "reason": "clothing"})" << "\n\n" << R"({"pair": "id1/fat→thin"})" << "\n";
    }
    const auto flags = read_flags(dir / "flags.jsonl");
    ASSERT_EQ(flags.size(), 2u);
    EXPECT_EQ(flags[0].reason, "clothing");
    EXPECT_EQ(flags[1].reason, "unspecified");
    {
        std::ofstream f(dir / "bad.jsonl");
        f << "{not json\n";
    }
    EXPECT_THROW(read_flags(dir / "bad.jsonl"), FormatError);
    EXPECT_THROW(read_manifest(dir / "missing.jsonl"), NotFoundError);
    EXPECT_THROW(record_from_json(nlohmann::json{{"identity", "a"}}), FormatError);
    std::filesystem::remove_all(dir);
}
