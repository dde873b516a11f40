#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "podmtl/model.hpp"
#include "podmtl/rng.hpp"
#include "podmtl/tasks.hpp"

namespace podmtl {

/// One logged exposure: who saw which show where, through which channel,
/// with which outcomes.
struct ImpressionRecord {
    std::uint64_t id = 0;
    std::int64_t ts = 0;  // epoch seconds
    Source source = Source::kPromotion;
    std::uint32_t user_id = 0;
    std::uint32_t show_id = 0;
    FeatureVector features;
    // Indexed by task position in the owning Dataset's task list;
    // -1 = label absent, else 0/1.
    std::array<std::int8_t, 8> labels{};
    double cost = 0.0;  // currency units; always 0 for promotions

    bool label_present(std::size_t task_idx) const { return labels[task_idx] >= 0; }
};

struct Dataset {
    std::vector<std::string> tasks;  // label order
    std::vector<ImpressionRecord> rows;

    std::size_t task_index(const std::string& t) const;
    std::size_t count_source(Source s) const;
    std::vector<std::size_t> source_indices(Source s) const;
};

/// Per-show catalog entry. Tier 0 holds the most-streamed shows; the
/// less-streamed flag is equivalent to lifetime_streams < 5000.
struct ShowInfo {
    std::uint32_t show_id = 0;
    std::vector<double> latent;
    // Persistent error of the platform content embedding for this show;
    // promotion-side observations are latent + this offset + fresh noise.
    std::vector<double> promo_embed_offset;
    double popularity = 0.0;
    double hours_30d = 0.0;
    int tier = 0;
    std::uint64_t lifetime_streams = 0;
    double bias = 0.0;
    int genre = 0;

    bool less_streamed() const { return lifetime_streams < 5000; }
};

struct UserInfo {
    std::vector<double> latent;
    double bias = 0.0;
};

struct GeneratorConfig {
    std::size_t n_users = 50'000;
    std::size_t n_shows = 2'000;
    std::size_t latent_dim = 8;
    std::size_t n_promo = 400'000;
    std::size_t n_ad = 100'000;

    double zipf_exponent = 1.1;
    double promo_flatten = 0.9;      // promo show sampling ~ popularity^flatten
    double ad_concentration = 1.0;   // ad show sampling ~ popularity^concentration
    double user_bias_sd = 0.4;
    double show_bias_sd = 0.25;

    // Outcome heads share the same latent affinity with distinct scales.
    double w_stream = 0.9, w_click = 0.85, w_like = 0.8, w_follow = 0.75;
    double b_stream = -4.1, b_click = -2.9, b_like = -4.3, b_follow = -4.8;
    double ad_stream_offset = -0.3;

    double user_noise_sd = 0.3;
    double aggregate_noise_sd = 0.3;
    // Content observation noise, per tier and channel; every array must be
    // non-decreasing in tier number.
    //
    // Promotion-side content features come from platform listening-behaviour
    // embeddings. For low-stream shows these are computed from sparse data:
    // each show's embedding carries a persistent per-show error (drawn once
    // per world) on top of mild per-impression noise. Ad-side features carry
    // advertiser-declared metadata: no persistent displacement, only a
    // per-impression noise that decays mildly with tier.
    std::array<double, 8> content_noise_sd = {0.08, 0.1, 0.12, 0.15, 0.18, 0.2, 0.25, 0.3};
    std::array<double, 8> content_persistent_sd = {0.02, 0.05, 0.1, 0.8, 1.0, 1.2, 1.6, 2.0};
    std::array<double, 8> ad_content_noise_sd = {0.05, 0.08, 0.12, 0.25, 0.3, 0.35, 0.45, 0.55};

    double ad_cost = 0.25;
    double hours_noise_sd = 0.5;   // lognormal sd on listening hours
    double hours_scale = 20'000.0;  // top-show 30-day listening hours scale

    std::int64_t t0 = 1'700'000'000;
    std::int64_t t_span = 90 * 86'400;

    void validate() const;
};

/// Users, catalog, and the fixed projections behind observable features.
/// Holds the true latents, so it can answer counterfactual outcome
/// probabilities for replay.
struct World {
    GeneratorConfig cfg;
    std::uint64_t seed = 0;
    std::vector<UserInfo> users;
    std::vector<ShowInfo> shows;
    Matrix aggregate_proj;  // latent_dim x 7
    Matrix genre_proj;      // latent_dim x 8
    std::vector<double> promo_cdf;
    std::vector<double> ad_cdf;

    double true_affinity(std::uint32_t user_id, std::uint32_t show_id) const;
    double true_stream_prob(std::uint32_t user_id, std::uint32_t show_id, Source s) const;
    double true_click_prob(std::uint32_t user_id, std::uint32_t show_id) const;
    double true_like_prob(std::uint32_t user_id, std::uint32_t show_id) const;
    double true_follow_prob(std::uint32_t user_id, std::uint32_t show_id) const;
};

World generate_world(const GeneratorConfig& cfg, std::uint64_t seed);

/// Sampled context/creative attributes for one impression. Creative formats
/// are channel-specific: display promotions use layouts 0-1, ads use the
/// audio/video formats 2-3. A promotions-only model therefore never observes
/// the ad-specific creative encodings during training.
struct ImpressionContext {
    int time_bucket = 0;  // 0..3
    int surface = 0;      // 0..3
    int format = 0;       // promotions 0..1, ads 2..3
    int slot = 0;         // 0..3
};

ImpressionContext sample_context(Rng& rng, Source source);

/// Observable features for a (user, show, context) triple: noisy projections
/// of the true latents plus one-hot context/creative encodings. Content
/// noise grows with the show's tier number and is larger on the ad channel
/// for tail tiers.
FeatureVector build_features(const World& world, std::uint32_t user_id, std::uint32_t show_id,
                             const ImpressionContext& ctx, Source channel, Rng& rng);

/// Draws promotion and ad impressions with outcomes from the latent affinity
/// model. Deterministic per seed.
Dataset simulate_logs(const World& world, std::size_t n_promo, std::size_t n_ad,
                      std::uint64_t seed);

struct SplitSpec {
    std::int64_t train_end = 0;  // exclusive
    std::int64_t val_end = 0;    // exclusive
};

struct Splits {
    Dataset train, val, test;
};

/// Boundary-exclusive temporal partition; a record exactly at a boundary
/// goes to the later split.
Splits temporal_split(const Dataset& data, const SplitSpec& spec);

/// Boundaries at fixed fractions of the generator time window.
SplitSpec split_by_fractions(const GeneratorConfig& cfg, double train_frac, double val_frac);

// Line-delimited JSON record files; lossless round-trip.
void write_impressions(const Dataset& data, const std::string& path);
Dataset read_impressions(const std::string& path,
                         const std::vector<std::string>& expected_tasks);

void write_catalog(const World& world, const std::string& path);
/// Catalog rows as read back from a file (no latents).
struct CatalogEntry {
    std::uint32_t show_id = 0;
    int tier = 0;
    double hours_30d = 0.0;
    std::uint64_t lifetime_streams = 0;
    double popularity = 0.0;
};
std::vector<CatalogEntry> read_catalog(const std::string& path);

}  // namespace podmtl
