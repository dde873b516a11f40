#include "podmtl/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "podmtl/dataio.hpp"
#include "podmtl/evaluation.hpp"
#include "podmtl/experiments.hpp"
#include "podmtl/kvconfig.hpp"
#include "podmtl/manifest.hpp"
#include "podmtl/model.hpp"
#include "podmtl/training.hpp"

namespace podmtl {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------------------
// Config assembly from kv files
// ---------------------------------------------------------------------------

GeneratorConfig world_from_config(const KvConfig& cfg) {
    GeneratorConfig w;
    w.n_users = cfg.get_uint("world", "n_users");
    w.n_shows = cfg.get_uint("world", "n_shows");
    w.latent_dim = static_cast<std::size_t>(cfg.get_int_or("world", "latent_dim", 8));
    w.n_promo = cfg.get_uint("world", "n_promo");
    w.n_ad = cfg.get_uint("world", "n_ad");
    w.zipf_exponent = cfg.get_double_or("world", "zipf_exponent", w.zipf_exponent);
    w.promo_flatten = cfg.get_double_or("world", "promo_flatten", w.promo_flatten);
    w.ad_concentration = cfg.get_double_or("world", "ad_concentration", w.ad_concentration);
    w.user_bias_sd = cfg.get_double_or("world", "user_bias_sd", w.user_bias_sd);
    w.show_bias_sd = cfg.get_double_or("world", "show_bias_sd", w.show_bias_sd);
    w.w_stream = cfg.get_double_or("world", "w_stream", w.w_stream);
    w.w_click = cfg.get_double_or("world", "w_click", w.w_click);
    w.w_like = cfg.get_double_or("world", "w_like", w.w_like);
    w.w_follow = cfg.get_double_or("world", "w_follow", w.w_follow);
    w.b_stream = cfg.get_double_or("world", "b_stream", w.b_stream);
    w.b_click = cfg.get_double_or("world", "b_click", w.b_click);
    w.b_like = cfg.get_double_or("world", "b_like", w.b_like);
    w.b_follow = cfg.get_double_or("world", "b_follow", w.b_follow);
    w.ad_stream_offset = cfg.get_double_or("world", "ad_stream_offset", w.ad_stream_offset);
    w.user_noise_sd = cfg.get_double_or("world", "user_noise_sd", w.user_noise_sd);
    w.aggregate_noise_sd =
        cfg.get_double_or("world", "aggregate_noise_sd", w.aggregate_noise_sd);
    if (cfg.has("world", "content_noise_sd")) {
        const auto parts = cfg.get_list("world", "content_noise_sd");
        if (parts.size() != 8) {
            throw config_error("world.content_noise_sd needs exactly 8 comma-separated values");
        }
        for (std::size_t i = 0; i < 8; ++i) w.content_noise_sd[i] = std::stod(parts[i]);
    }
    w.ad_cost = cfg.get_double_or("world", "ad_cost", w.ad_cost);
    w.t0 = cfg.get_int_or("world", "t0", w.t0);
    w.t_span = cfg.get_int_or("world", "t_span", w.t_span);
    return w;
}

ModelConfig model_from_config(const KvConfig& cfg) {
    ModelConfig m;
    m.user_dim = static_cast<std::size_t>(cfg.get_int_or("model", "user_dim", 16));
    m.content_dim = static_cast<std::size_t>(cfg.get_int_or("model", "content_dim", 16));
    m.context_dim = static_cast<std::size_t>(cfg.get_int_or("model", "context_dim", 8));
    m.creative_dim = static_cast<std::size_t>(cfg.get_int_or("model", "creative_dim", 8));
    auto widths = [&](const std::string& key, const std::vector<std::size_t>& fallback) {
        if (!cfg.has("model", key)) return fallback;
        std::vector<std::size_t> out;
        for (const auto& s : cfg.get_list("model", key)) {
            const long long v = std::stoll(s);
            if (v <= 0) throw config_error("model." + key + ": widths must be positive");
            out.push_back(static_cast<std::size_t>(v));
        }
        return out;
    };
    m.encoder_widths = widths("encoder_widths", m.encoder_widths);
    m.tower_widths = widths("tower_widths", m.tower_widths);
    m.norm_placement = norm_placement_from_name(
        cfg.get_string_or("model", "norm_placement", "encoder_output"));
    m.norm_eps = cfg.get_double_or("model", "norm_eps", m.norm_eps);
    m.norm_momentum = cfg.get_double_or("model", "norm_momentum", m.norm_momentum);
    return m;
}

AdamConfig adam_from_config(const KvConfig& cfg) {
    AdamConfig a;
    a.lr = cfg.get_double_or("optimizer", "lr", a.lr);
    a.beta1 = cfg.get_double_or("optimizer", "beta1", a.beta1);
    a.beta2 = cfg.get_double_or("optimizer", "beta2", a.beta2);
    a.eps = cfg.get_double_or("optimizer", "eps", a.eps);
    a.decay_factor = cfg.get_double_or("optimizer", "decay_factor", a.decay_factor);
    a.decay_every = static_cast<std::uint64_t>(cfg.get_int_or("optimizer", "decay_every", 0));
    return a;
}

TaskSpec tasks_from_config(const KvConfig& cfg, const std::string& section) {
    TaskSpec def = TaskSpec::standard_five();
    TaskSpec t;
    t.tasks = cfg.get_list_or(section, "tasks", def.tasks);
    const auto promo = cfg.get_list_or(
        section, "promo_tasks",
        std::vector<std::string>(def.promo_tasks.begin(), def.promo_tasks.end()));
    const auto ad = cfg.get_list_or(
        section, "ad_tasks", std::vector<std::string>(def.ad_tasks.begin(), def.ad_tasks.end()));
    for (const auto& s : promo) {
        if (t.has(s)) t.promo_tasks.insert(s);
    }
    for (const auto& s : ad) {
        if (t.has(s)) t.ad_tasks.insert(s);
    }
    for (const auto& name : t.tasks) {
        t.weights[name] = cfg.get_double_or(section, "lambda." + name, 1.0);
    }
    t.validate();
    return t;
}

void apply_mask_overrides(const KvConfig& cfg, const std::string& section, MaskPolicy& mask) {
    for (const auto& key : cfg.keys(section)) {
        if (key.rfind("mask.", 0) != 0) continue;
        const auto rest = key.substr(5);
        const auto dot = rest.find('.');
        if (dot == std::string::npos) {
            throw config_error("mask override key '" + key + "' must be mask.<P|A>.<task>");
        }
        const Source s = source_from_code(rest.substr(0, dot));
        const std::string task_name = rest.substr(dot + 1);
        mask.set(s, task_name, cfg.get_bool(section, key));
    }
}

TrainConfig train_from_config(const KvConfig& cfg) {
    TrainConfig t;
    t.model = model_from_config(cfg);
    t.loss.tasks = tasks_from_config(cfg, "tasks");
    t.loss.mask = MaskPolicy::directional_default(t.loss.tasks);
    apply_mask_overrides(cfg, "tasks", t.loss.mask);
    t.loss.labels = LabelRule::standard(t.loss.tasks);
    t.adam = adam_from_config(cfg);
    t.batch_size = static_cast<std::size_t>(cfg.get_int_or("training", "batch_size", 512));
    t.epochs = static_cast<std::size_t>(cfg.get_int_or("training", "epochs", 3));
    t.balanced = cfg.get_bool_or("training", "balanced", true);
    t.seed = cfg.get_uint("", "seed");
    return t;
}

ordered_json config_snapshot(const KvConfig& cfg) {
    ordered_json j = ordered_json::object();
    auto put = [&](const std::string& section) {
        ordered_json s = ordered_json::object();
        for (const auto& k : cfg.keys(section)) s[k] = cfg.get_string(section, k);
        return s;
    };
    if (!cfg.keys("").empty()) j["top"] = put("");
    for (const auto& name : cfg.sections()) j[name] = put(name);
    return j;
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw data_error("cannot open '" + path + "' for writing");
    os << text;
    if (!os) throw data_error("failed writing '" + path + "'");
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

int cmd_generate(const std::string& config_path, const std::string& out_dir,
                 std::optional<std::uint64_t> seed_flag) {
    const auto t0 = std::chrono::steady_clock::now();
    KvConfig cfg = KvConfig::parse_file(config_path);
    if (seed_flag) cfg.set("", "seed", std::to_string(*seed_flag));
    const std::uint64_t seed = cfg.get_uint("", "seed");

    const GeneratorConfig world_cfg = world_from_config(cfg);
    if (world_cfg.n_ad == 0) {
        throw config_error(
            "world.n_ad = 0: refusing to generate, source-balanced training is impossible "
            "without ad impressions");
    }
    if (world_cfg.n_promo == 0) {
        throw config_error(
            "world.n_promo = 0: refusing to generate, source-balanced training is impossible "
            "without promotion impressions");
    }
    const double train_frac = cfg.get_double_or("split", "train_frac", 0.70);
    const double val_frac = cfg.get_double_or("split", "val_frac", 0.15);

    fs::create_directories(out_dir);
    const World world = generate_world(world_cfg, derive_seed(seed, 100));
    const Dataset logs =
        simulate_logs(world, world_cfg.n_promo, world_cfg.n_ad, derive_seed(seed, 101));
    const Splits splits = temporal_split(logs, split_by_fractions(world_cfg, train_frac, val_frac));

    const std::string catalog_path = out_dir + "/catalog.jsonl";
    write_catalog(world, catalog_path);
    write_impressions(splits.train, out_dir + "/train.jsonl");
    write_impressions(splits.val, out_dir + "/val.jsonl");
    write_impressions(splits.test, out_dir + "/test.jsonl");

    RunManifest man;
    man.command = "generate";
    man.config = config_snapshot(cfg);
    man.seed = seed;
    man.add_input(config_path);
    man.add_output(catalog_path);
    man.add_output(out_dir + "/train.jsonl");
    man.add_output(out_dir + "/val.jsonl");
    man.add_output(out_dir + "/test.jsonl");
    man.duration_seconds = seconds_since(t0);
    man.write(out_dir + "/manifest_generate.json");

    std::cout << "generated " << splits.train.rows.size() << " train / " << splits.val.rows.size()
              << " val / " << splits.test.rows.size() << " test impressions, "
              << world.shows.size() << " shows\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

ordered_json epoch_log_json(const EpochLog& e) {
    ordered_json j;
    j["epoch"] = e.epoch;
    j["train_loss"] = e.train_loss;
    ordered_json tl = ordered_json::object();
    for (const auto& [t, v] : e.task_loss) tl[t] = v;
    j["task_loss"] = tl;
    ordered_json ap = ordered_json::object();
    for (const auto& [t, v] : e.val_ap) {
        if (v) {
            ap[t] = *v;
        } else {
            ap[t] = nullptr;
        }
    }
    j["val_ap"] = ap;
    j["selection_score"] = e.selection_score;
    j["selected"] = e.selected;
    return j;
}

int cmd_train(const std::string& config_path, std::string data_dir, std::string model_path,
              std::string log_path, std::optional<std::uint64_t> seed_flag,
              std::optional<std::size_t> epochs_flag) {
    const auto t0 = std::chrono::steady_clock::now();
    KvConfig cfg = KvConfig::parse_file(config_path);
    if (seed_flag) cfg.set("", "seed", std::to_string(*seed_flag));
    if (epochs_flag) cfg.set("training", "epochs", std::to_string(*epochs_flag));
    // flags take precedence over [paths] keys in the config
    if (data_dir.empty()) data_dir = cfg.get_string_or("paths", "data", "");
    if (model_path.empty()) model_path = cfg.get_string_or("paths", "model", "");
    if (log_path.empty()) log_path = cfg.get_string_or("paths", "log", "");
    if (data_dir.empty()) {
        throw config_error("train: no data directory (use --data or [paths] data)");
    }
    if (model_path.empty()) {
        throw config_error("train: no model output path (use --model or [paths] model)");
    }
    cfg.set("paths", "data", data_dir);
    cfg.set("paths", "model", model_path);
    TrainConfig tc = train_from_config(cfg);

    const std::string train_path = data_dir + "/train.jsonl";
    const std::string val_path = data_dir + "/val.jsonl";
    if (!fs::exists(train_path)) {
        throw data_error("missing training split '" + train_path + "'");
    }
    if (!fs::exists(val_path)) {
        throw data_error("missing validation split '" + val_path + "'");
    }
    const Dataset train_set = read_impressions(train_path, TaskSpec::standard_five().tasks);
    const Dataset val_set = read_impressions(val_path, TaskSpec::standard_five().tasks);

    TrainResult result = train(tc, train_set, val_set);

    if (log_path.empty()) log_path = model_path + ".log.jsonl";
    {
        std::ofstream os(log_path);
        if (!os) throw data_error("cannot open '" + log_path + "' for writing");
        for (const auto& e : result.log) os << epoch_log_json(e).dump() << '\n';
    }
    save_model(result.params, model_path);

    RunManifest man;
    man.command = "train";
    man.config = config_snapshot(cfg);
    man.seed = tc.seed;
    man.add_input(config_path);
    man.add_input(train_path);
    man.add_input(val_path);
    man.add_output(model_path);
    man.add_output(log_path);
    man.duration_seconds = seconds_since(t0);
    man.write(model_path + ".manifest.json");

    if (result.diverged) {
        std::cerr << "training diverged: " << result.divergence_note
                  << " (wrote last good checkpoint)\n";
        return 3;
    }
    std::cout << "trained " << result.log.size() << " epochs, best epoch " << result.best_epoch
              << ", model written to " << model_path << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

int cmd_eval(const std::string& model_path, const std::string& data_path,
             const std::string& catalog_path, const std::string& out_path, bool oracle_scores,
             bool ad_heads_on_promo, bool all_tiers) {
    const auto t0 = std::chrono::steady_clock::now();
    ModelParams params = load_model(model_path);
    const Dataset data = read_impressions(data_path, TaskSpec::standard_five().tasks);
    const std::vector<CatalogEntry> catalog = read_catalog(catalog_path);

    for (const auto& t : params.tasks.tasks) {
        if (std::find(data.tasks.begin(), data.tasks.end(), t) == data.tasks.end()) {
            throw data_error("model task '" + t + "' has no labels in '" + data_path + "'");
        }
    }

    MetricsReport rep;
    // content-addressed ids so identical inputs give identical reports
    // regardless of where the files live
    rep.model_id = file_checksum(model_path);
    rep.dataset_id = file_checksum(data_path);

    const EvalPolicy policy = EvalPolicy::native_defaults(params.tasks, ad_heads_on_promo);
    for (const auto& t : params.tasks.tasks) {
        std::vector<double> scores;
        if (oracle_scores) {
            const std::size_t ti = data.task_index(t);
            scores.resize(data.rows.size(), 0.5);
            for (std::size_t i = 0; i < data.rows.size(); ++i) {
                if (data.rows[i].label_present(ti)) {
                    scores[i] = data.rows[i].labels[ti] ? 0.75 : 0.25;
                }
            }
        } else {
            scores = score_dataset(params, data, t);
        }
        const RankedPredictions rp = gather_task_rows(data, t, scores, policy);
        rep.task_ap[t] = rp.labels.empty() ? std::nullopt
                                           : try_average_precision(rp.scores, rp.labels);
        rep.task_ap_tie_averaged[t] =
            rep.task_ap[t] ? std::optional<double>(
                                 average_precision_tie_averaged(rp.scores, rp.labels))
                           : std::nullopt;
        if (!rep.task_ap[t]) {
            std::cerr << "warning: task '" << t
                      << "' has no positive labels in its evaluation rows; AP reported absent\n";
        }
    }

    // Online-style segment metrics over the ad channel of the log.
    std::vector<ServedImpression> served;
    const std::size_t i_as = data.task_index(task::kAdStream);
    const std::size_t i_ck = data.task_index(task::kClick);
    for (const auto& r : data.rows) {
        if (r.source != Source::kAd) continue;
        ServedImpression imp;
        imp.show_id = r.show_id;
        imp.streamed = r.label_present(i_as) && r.labels[i_as] == 1;
        imp.clicked = r.label_present(i_ck) && r.labels[i_ck] == 1;
        imp.cost = r.cost;
        served.push_back(imp);
    }
    if (!served.empty()) {
        MetricsReport seg = online_metrics(served, catalog);
        rep.tiers = seg.tiers;
        rep.all = seg.all;
        rep.less_streamed = seg.less_streamed;
    }

    const std::string table = rep.render_table(all_tiers);
    std::cout << table;
    write_text(out_path, rep.to_json().dump(2) + "\n");

    RunManifest man;
    man.command = "eval";
    man.config = ordered_json::object();
    man.config["model"] = model_path;
    man.config["data"] = data_path;
    man.config["catalog"] = catalog_path;
    man.config["oracle_scores"] = oracle_scores;
    man.config["ad_heads_on_promo"] = ad_heads_on_promo;
    man.add_input(model_path);
    man.add_input(data_path);
    man.add_input(catalog_path);
    man.add_output(out_path);
    man.duration_seconds = seconds_since(t0);
    man.write(out_path + ".manifest.json");
    return 0;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

std::vector<std::uint64_t> parse_seeds(const KvConfig& cfg, const std::string& section) {
    if (!cfg.has(section, "seeds")) {
        throw config_error("spec: missing required key 'seeds' in [" + section +
                           "] (seeds are mandatory, no implicit entropy)");
    }
    std::vector<std::uint64_t> seeds;
    for (const auto& s : cfg.get_list(section, "seeds")) {
        seeds.push_back(static_cast<std::uint64_t>(std::stoull(s)));
    }
    if (seeds.empty()) throw config_error("spec: empty seed list");
    return seeds;
}

ArmSpec arm_from_section(const KvConfig& cfg, const std::string& section,
                         const std::string& name) {
    ArmSpec arm;
    arm.name = name;
    arm.tasks = cfg.get_list(section, "tasks");
    for (const auto& t : cfg.get_list_or(section, "promo_tasks", {})) arm.promo_tasks.insert(t);
    for (const auto& t : cfg.get_list_or(section, "ad_tasks", {})) arm.ad_tasks.insert(t);
    const std::string data = cfg.get_string_or(section, "data", "both");
    if (data == "P") {
        arm.data = ArmSpec::DataUse::kPromoOnly;
    } else if (data == "A") {
        arm.data = ArmSpec::DataUse::kAdOnly;
    } else if (data == "both") {
        arm.data = ArmSpec::DataUse::kBoth;
    } else {
        throw config_error("arm '" + name + "': data must be P, A or both");
    }
    arm.balanced = cfg.get_bool_or(section, "balanced", arm.data == ArmSpec::DataUse::kBoth);
    for (const auto& key : cfg.keys(section)) {
        if (key.rfind("mask.", 0) != 0) continue;
        const auto rest = key.substr(5);
        const auto dot = rest.find('.');
        if (dot == std::string::npos) {
            throw config_error("arm '" + name + "': mask override key '" + key +
                               "' must be mask.<P|A>.<task>");
        }
        arm.mask_overrides.push_back(ArmSpec::MaskOverride{
            source_from_code(rest.substr(0, dot)), rest.substr(dot + 1),
            cfg.get_bool(section, key)});
    }
    arm.task_spec();  // validate eagerly
    return arm;
}

std::vector<ArmSpec> arms_from_spec(const KvConfig& cfg, const std::string& list_section) {
    std::vector<ArmSpec> arms;
    const auto names = cfg.get_list_or(list_section, "arms", {"standard5"});
    const std::vector<ArmSpec> std_arms = standard_arms();
    for (const auto& n : names) {
        if (n == "standard5") {
            arms.insert(arms.end(), std_arms.begin(), std_arms.end());
            continue;
        }
        bool found = false;
        for (const auto& a : std_arms) {
            if (a.name == n) {
                arms.push_back(a);
                found = true;
                break;
            }
        }
        if (found) continue;
        const std::string section = "arm." + n;
        if (cfg.keys(section).empty()) {
            throw config_error("spec: arm '" + n + "' is neither a standard arm nor a [" +
                               section + "] section");
        }
        arms.push_back(arm_from_section(cfg, section, n));
    }
    return arms;
}

ExperimentBase base_from_spec(const KvConfig& cfg) {
    ExperimentBase base;
    base.world = world_from_config(cfg);
    base.train_frac = cfg.get_double_or("split", "train_frac", base.train_frac);
    base.val_frac = cfg.get_double_or("split", "val_frac", base.val_frac);
    base.model = model_from_config(cfg);
    base.adam = adam_from_config(cfg);
    base.batch_size = static_cast<std::size_t>(cfg.get_int_or("training", "batch_size", 512));
    base.epochs = static_cast<std::size_t>(cfg.get_int_or("training", "epochs", 3));
    return base;
}

int cmd_ablate(const std::string& spec_path, const std::string& out_dir) {
    const auto t0 = std::chrono::steady_clock::now();
    const KvConfig cfg = KvConfig::parse_file(spec_path);

    AblationConfig ac;
    ac.base = base_from_spec(cfg);
    ac.seeds = parse_seeds(cfg, "ablation");
    ac.baseline_arm = cfg.get_string_or("ablation", "baseline", "promo_baseline");
    ac.save_models = cfg.get_bool_or("ablation", "save_models", false);
    ac.model_dir = out_dir + "/models";
    const std::vector<ArmSpec> arms = arms_from_spec(cfg, "ablation");

    fs::create_directories(out_dir);
    const AblationResult result = run_ablation(ac, arms);

    const std::string json_path = out_dir + "/ablation.json";
    const std::string table_path = out_dir + "/ablation.txt";
    const std::string table = result.render_table();
    emit_report(result.to_json(), table, json_path, table_path);
    std::cout << table;

    RunManifest man;
    man.command = "ablate";
    man.config = config_snapshot(cfg);
    man.seed = ac.seeds.front();
    man.add_input(spec_path);
    man.add_output(json_path);
    man.add_output(table_path);
    man.duration_seconds = seconds_since(t0);
    man.write(out_dir + "/manifest_ablate.json");

    return result.any_failed ? 4 : 0;
}

// ---------------------------------------------------------------------------
// replay
// ---------------------------------------------------------------------------

struct ReplayArmSource {
    std::string name;
    std::optional<std::string> model_path;  // pretrained
    std::optional<std::string> head;
    std::optional<ArmSpec> arm;  // trained per seed
};

ReplayArmSource replay_arm_source(const KvConfig& cfg, const std::string& name) {
    ReplayArmSource src;
    src.name = name;
    const std::string section = "arm." + name;
    if (cfg.has(section, "model")) {
        src.model_path = cfg.get_string(section, "model");
        src.head = cfg.get_string_or(section, "head", std::string(task::kAdStream));
        return src;
    }
    for (const auto& a : standard_arms()) {
        if (a.name == name) {
            src.arm = a;
            return src;
        }
    }
    if (!cfg.keys(section).empty()) {
        src.arm = arm_from_section(cfg, section, name);
        return src;
    }
    throw config_error("replay spec: arm '" + name +
                       "' is neither a standard arm, an [arm." + name +
                       "] section, nor a pretrained model reference");
}

int cmd_replay(const std::string& spec_path, const std::string& out_dir) {
    const auto t0 = std::chrono::steady_clock::now();
    const KvConfig cfg = KvConfig::parse_file(spec_path);

    ReplayConfig rc;
    rc.opportunities = static_cast<std::size_t>(cfg.get_int_or("replay", "opportunities", 30000));
    rc.candidate_pool = static_cast<std::size_t>(cfg.get_int_or("replay", "candidate_pool", 20));
    rc.cost_per_impression = cfg.get_double_or("replay", "cost", 0.25);
    const std::vector<std::uint64_t> seeds = parse_seeds(cfg, "replay");

    const std::string baseline_name = cfg.get_string("replay", "baseline");
    const std::string candidate_name = cfg.get_string("replay", "candidate");
    ReplayArmSource baseline = replay_arm_source(cfg, baseline_name);
    ReplayArmSource candidate = replay_arm_source(cfg, candidate_name);

    // Fail fast on missing model files before any training starts.
    for (const auto* src : {&baseline, &candidate}) {
        if (src->model_path && !fs::exists(*src->model_path)) {
            throw data_error("replay spec: model file '" + *src->model_path +
                             "' for arm '" + src->name + "' does not exist");
        }
    }

    const ExperimentBase base = base_from_spec(cfg);
    fs::create_directories(out_dir);

    ordered_json per_seed = ordered_json::array();
    std::string tables;
    bool any_failed = false;

    // Aggregates of per-tier i2s deltas across seeds.
    std::map<std::string, std::vector<double>> i2s_deltas;

    const bool needs_training = !baseline.model_path || !candidate.model_path;

    for (const std::uint64_t seed : seeds) {
        const World world = generate_world(base.world, derive_seed(seed, 100));
        std::optional<Splits> splits;
        if (needs_training) {
            const Dataset logs = simulate_logs(world, base.world.n_promo, base.world.n_ad,
                                               derive_seed(seed, 101));
            splits = temporal_split(
                logs, split_by_fractions(base.world, base.train_frac, base.val_frac));
        }
        std::vector<ReplayPolicy> policies;
        try {
            for (const auto* src : {&baseline, &candidate}) {
                // A promotions model pressed into ad serving keeps reading
                // the promotion pipeline's features.
                if (src->model_path) {
                    ModelParams m = load_model(*src->model_path);
                    const Source channel = *src->head == task::kPromotionStream
                                               ? Source::kPromotion
                                               : Source::kAd;
                    policies.push_back(
                        model_policy(src->name, std::move(m), *src->head, channel));
                } else {
                    TrainResult tr =
                        train_arm(base, *src->arm, *splits,
                                  derive_seed(seed, 300 + (src == &candidate ? 1 : 0)));
                    if (tr.diverged) {
                        throw arm_error("arm '" + src->name + "' diverged: " +
                                        tr.divergence_note);
                    }
                    const std::string head = src->arm->ad_scoring_head();
                    const Source channel = head == task::kPromotionStream
                                               ? Source::kPromotion
                                               : Source::kAd;
                    policies.push_back(
                        model_policy(src->name, std::move(tr.params), head, channel));
                }
            }
        } catch (const arm_error& e) {
            any_failed = true;
            ordered_json j;
            j["seed"] = seed;
            j["failed"] = true;
            j["note"] = e.what();
            per_seed.push_back(j);
            continue;
        }

        rc.seed = derive_seed(seed, 400);
        const ReplayResult result = run_replay(world, policies, rc);
        ordered_json j = result.to_json();
        j["seed"] = seed;
        per_seed.push_back(j);
        tables += "seed " + std::to_string(seed) + ":\n" + result.render_table();

        for (const auto& [seg, v] : result.deltas[1].i2s) {
            if (v) i2s_deltas[seg].push_back(*v);
        }
    }

    ordered_json report;
    report["replay"] = per_seed;
    ordered_json agg = ordered_json::object();
    for (const auto& [seg, vals] : i2s_deltas) {
        double s = 0.0;
        for (double v : vals) s += v;
        agg[seg] = vals.empty() ? ordered_json(nullptr)
                                : ordered_json(s / static_cast<double>(vals.size()));
    }
    report["mean_i2s_rel_change_pct"] = agg;

    const std::string json_path = out_dir + "/replay.json";
    const std::string table_path = out_dir + "/replay.txt";
    emit_report(report, tables, json_path, table_path);
    std::cout << tables;

    RunManifest man;
    man.command = "replay";
    man.config = config_snapshot(cfg);
    man.seed = seeds.front();
    man.add_input(spec_path);
    man.add_output(json_path);
    man.add_output(table_path);
    man.duration_seconds = seconds_since(t0);
    man.write(out_dir + "/manifest_replay.json");

    return any_failed ? 4 : 0;
}

// ---------------------------------------------------------------------------
// inspect
// ---------------------------------------------------------------------------

int cmd_inspect(const std::string& model_path) {
    const ModelParams params = load_model(model_path);
    std::cout << "model: " << model_path << "\n";
    std::cout << "tasks:";
    for (const auto& t : params.tasks.tasks) std::cout << ' ' << t;
    std::cout << "\npromo tasks:";
    for (const auto& t : params.tasks.promo_tasks) std::cout << ' ' << t;
    std::cout << "\nad tasks:";
    for (const auto& t : params.tasks.ad_tasks) std::cout << ' ' << t;
    std::cout << "\ninput dim: " << params.config.input_dim()
              << " (user " << params.config.user_dim << ", content " << params.config.content_dim
              << ", context " << params.config.context_dim << ", creative "
              << params.config.creative_dim << ")\n";
    std::cout << "encoder widths:";
    for (auto w : params.config.encoder_widths) std::cout << ' ' << w;
    std::cout << "\ntower widths:";
    for (auto w : params.config.tower_widths) std::cout << ' ' << w;
    std::cout << " 1\nnorm placement: " << norm_placement_name(params.config.norm_placement)
              << "\n";
    std::cout << "parameter blocks:\n";
    std::size_t total = 0;
    params.for_each_block([&](const std::string& name, const Matrix& m) {
        double mean = 0.0;
        for (std::size_t i = 0; i < m.size(); ++i) mean += m[i];
        mean /= m.size() ? static_cast<double>(m.size()) : 1.0;
        std::printf("  %-32s %8s  l2=%.6f mean=%+.6f\n", name.c_str(), m.shape_str().c_str(),
                    m.l2_norm(), mean);
        total += m.size();
    });
    std::cout << "total trainable parameters: " << total << "\n";
    return 0;
}

}  // namespace

int run_command(const std::vector<std::string>& args) {
    CLI::App app{"Unified multi-task ads and promotions targeting workbench"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "Generate a synthetic world and impression logs");
    std::string gen_config, gen_out;
    std::optional<std::uint64_t> gen_seed;
    gen->add_option("--config", gen_config, "Generator config file")->required();
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--seed", gen_seed, "Override the config seed");

    // train
    auto* tr = app.add_subcommand("train", "Train a model on generated splits");
    std::string tr_config, tr_data, tr_model, tr_log;
    std::optional<std::uint64_t> tr_seed;
    std::optional<std::size_t> tr_epochs;
    tr->add_option("--config", tr_config, "Training config file")->required();
    tr->add_option("--data", tr_data,
                   "Directory with train.jsonl and val.jsonl (or [paths] data in the config)");
    tr->add_option("--model", tr_model,
                   "Output model path (or [paths] model in the config)");
    tr->add_option("--log", tr_log, "Training log path (default <model>.log.jsonl)");
    tr->add_option("--seed", tr_seed, "Override the config seed");
    tr->add_option("--epochs", tr_epochs, "Override the config epoch count");

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate a model on a split");
    std::string ev_model, ev_data, ev_catalog, ev_out;
    bool ev_oracle = false, ev_ad_on_promo = false, ev_all_tiers = false;
    ev->add_option("--model", ev_model, "Model file")->required();
    ev->add_option("--data", ev_data, "Impression file to evaluate on")->required();
    ev->add_option("--catalog", ev_catalog, "Show catalog file")->required();
    ev->add_option("--out", ev_out, "Output report path")->required();
    ev->add_flag("--debug-oracle-scores", ev_oracle,
                 "Score with the labels themselves (debug ceiling: AP = 1)");
    ev->add_flag("--ad-heads-on-promo", ev_ad_on_promo,
                 "Also evaluate the ad stream head on promotion impressions");
    ev->add_flag("--all-tiers", ev_all_tiers, "Render tiers 6-7 in the table output");

    // ablate
    auto* ab = app.add_subcommand("ablate", "Run the task-setup ablation grid");
    std::string ab_spec, ab_out;
    ab->add_option("--spec", ab_spec, "Experiment spec file")->required();
    ab->add_option("--out", ab_out, "Output directory")->required();

    // replay
    auto* rp = app.add_subcommand("replay", "Run the paired budget-split replay");
    std::string rp_spec, rp_out;
    rp->add_option("--spec", rp_spec, "Replay spec file")->required();
    rp->add_option("--out", rp_out, "Output directory")->required();

    // inspect
    auto* in = app.add_subcommand("inspect", "Print model header and parameter statistics");
    std::string in_model;
    in->add_option("--model", in_model, "Model file")->required();

    std::vector<const char*> argv;
    argv.push_back("podmtl");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        app.exit(e);
        return 0;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (gen->parsed()) return cmd_generate(gen_config, gen_out, gen_seed);
        if (tr->parsed()) return cmd_train(tr_config, tr_data, tr_model, tr_log, tr_seed, tr_epochs);
        if (ev->parsed()) {
            return cmd_eval(ev_model, ev_data, ev_catalog, ev_out, ev_oracle, ev_ad_on_promo,
                            ev_all_tiers);
        }
        if (ab->parsed()) return cmd_ablate(ab_spec, ab_out);
        if (rp->parsed()) return cmd_replay(rp_spec, rp_out);
        if (in->parsed()) return cmd_inspect(in_model);
    } catch (const divergence_error& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return 3;
    } catch (const arm_error& e) {
        std::cerr << "experiment arm failure: " << e.what() << "\n";
        return 4;
    } catch (const data_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

}  // namespace podmtl
