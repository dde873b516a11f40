#include "podmtl/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "podmtl/rng.hpp"

namespace podmtl {

using ordered_json = nlohmann::ordered_json;

std::string norm_placement_name(NormPlacement p) {
    switch (p) {
        case NormPlacement::kNone: return "none";
        case NormPlacement::kInput: return "input";
        case NormPlacement::kEncoderOutput: return "encoder_output";
    }
    throw config_error("unknown norm placement");
}

NormPlacement norm_placement_from_name(const std::string& name) {
    if (name == "none") return NormPlacement::kNone;
    if (name == "input") return NormPlacement::kInput;
    if (name == "encoder_output") return NormPlacement::kEncoderOutput;
    throw config_error("unknown norm placement '" + name +
                       "' (expected none|input|encoder_output)");
}

std::size_t ModelConfig::norm_dim() const {
    switch (norm_placement) {
        case NormPlacement::kNone: return 0;
        case NormPlacement::kInput: return input_dim();
        case NormPlacement::kEncoderOutput: return encoder_output_dim();
    }
    return 0;
}

void ModelConfig::validate() const {
    if (user_dim == 0 || content_dim == 0 || context_dim == 0 || creative_dim == 0) {
        throw config_error("ModelConfig: all feature group dims must be positive");
    }
    for (std::size_t w : encoder_widths) {
        if (w == 0) throw config_error("ModelConfig: encoder width must be positive");
    }
    for (std::size_t w : tower_widths) {
        if (w == 0) throw config_error("ModelConfig: tower width must be positive");
    }
    if (norm_eps <= 0.0) throw config_error("ModelConfig: norm_eps must be positive");
    if (norm_momentum < 0.0 || norm_momentum >= 1.0) {
        throw config_error("ModelConfig: norm_momentum must lie in [0, 1)");
    }
}

namespace {

void visit_blocks(ModelParams& p, const std::function<void(const std::string&, Matrix&)>& fn) {
    for (std::size_t i = 0; i < p.encoder.size(); ++i) {
        fn("encoder." + std::to_string(i) + ".weight", p.encoder[i].weight);
        fn("encoder." + std::to_string(i) + ".bias", p.encoder[i].bias);
    }
    if (p.config.norm_placement != NormPlacement::kNone) {
        fn("norm.gamma", p.norm.gamma);
        fn("norm.beta", p.norm.beta);
    }
    for (const auto& t : p.tasks.tasks) {
        auto& tower = p.towers.at(t);
        for (std::size_t i = 0; i < tower.size(); ++i) {
            fn("tower." + t + "." + std::to_string(i) + ".weight", tower[i].weight);
            fn("tower." + t + "." + std::to_string(i) + ".bias", tower[i].bias);
        }
    }
}

}  // namespace

void ModelParams::for_each_block(const std::function<void(const std::string&, Matrix&)>& fn) {
    visit_blocks(*this, fn);
}

void ModelParams::for_each_block(
    const std::function<void(const std::string&, const Matrix&)>& fn) const {
    visit_blocks(const_cast<ModelParams&>(*this),
                 [&fn](const std::string& n, Matrix& m) { fn(n, m); });
}

namespace {

DenseLayer init_layer(Rng& rng, std::size_t in, std::size_t out, double gain) {
    DenseLayer l;
    l.weight = Matrix(in, out);
    const double sd = std::sqrt(gain / static_cast<double>(in));
    for (std::size_t i = 0; i < l.weight.size(); ++i) l.weight[i] = rng.normal(0.0, sd);
    l.bias = Matrix(1, out);
    return l;
}

}  // namespace

ModelParams init_params(const ModelConfig& config, const TaskSpec& tasks, std::uint64_t seed) {
    config.validate();
    tasks.validate();
    ModelParams p;
    p.config = config;
    p.tasks = tasks;

    Rng rng(derive_seed(seed, 0x6d6f64656cULL));  // "model"

    std::size_t in = config.input_dim();
    for (std::size_t w : config.encoder_widths) {
        p.encoder.push_back(init_layer(rng, in, w, 2.0));
        in = w;
    }
    if (config.norm_placement != NormPlacement::kNone) {
        const std::size_t d = config.norm_dim();
        p.norm.gamma = Matrix(1, d, 1.0);
        p.norm.beta = Matrix(1, d, 0.0);
        p.norm.running = BatchNormRunning::identity(d);
    }
    for (const auto& t : tasks.tasks) {
        std::vector<DenseLayer> tower;
        std::size_t tin = config.encoder_output_dim();
        for (std::size_t w : config.tower_widths) {
            tower.push_back(init_layer(rng, tin, w, 2.0));
            tin = w;
        }
        tower.push_back(init_layer(rng, tin, 1, 1.0));  // logit layer
        p.towers[t] = std::move(tower);
    }
    return p;
}

Matrix concat_features(const ModelConfig& config, std::span<const FeatureVector> batch) {
    Matrix x(batch.size(), config.input_dim());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const FeatureVector& f = batch[i];
        if (f.user.size() != config.user_dim) {
            throw config_error("feature group 'user' has dim " + std::to_string(f.user.size()) +
                               ", config expects " + std::to_string(config.user_dim));
        }
        if (f.content.size() != config.content_dim) {
            throw config_error("feature group 'content' has dim " +
                               std::to_string(f.content.size()) + ", config expects " +
                               std::to_string(config.content_dim));
        }
        if (f.context.size() != config.context_dim) {
            throw config_error("feature group 'context' has dim " +
                               std::to_string(f.context.size()) + ", config expects " +
                               std::to_string(config.context_dim));
        }
        if (f.creative.size() != config.creative_dim) {
            throw config_error("feature group 'creative' has dim " +
                               std::to_string(f.creative.size()) + ", config expects " +
                               std::to_string(config.creative_dim));
        }
        std::size_t j = 0;
        for (double v : f.user) x(i, j++) = v;
        for (double v : f.content) x(i, j++) = v;
        for (double v : f.context) x(i, j++) = v;
        for (double v : f.creative) x(i, j++) = v;
    }
    x.require_finite("features");
    return x;
}

ForwardBuild build_forward(GradTape& tape, ModelParams& params, const Matrix& features,
                           NormMode mode, const std::vector<std::string>& head_tasks) {
    if (features.cols() != params.config.input_dim()) {
        throw config_error("feature matrix width " + std::to_string(features.cols()) +
                           " does not match model input dim " +
                           std::to_string(params.config.input_dim()));
    }
    ForwardBuild fb;
    fb.input = tape.constant(features);

    // Register every trainable block so gradient extraction is total even
    // for towers no requested task touches.
    params.for_each_block([&](const std::string& name, Matrix& m) {
        fb.param_nodes[name] = tape.parameter(m);
    });

    const auto& cfg = params.config;
    GradTape::NodeId h = fb.input;
    if (cfg.norm_placement == NormPlacement::kInput) {
        h = tape.batchnorm(h, fb.param_nodes.at("norm.gamma"), fb.param_nodes.at("norm.beta"),
                           params.norm.running, mode, cfg.norm_eps, cfg.norm_momentum);
    }
    for (std::size_t i = 0; i < params.encoder.size(); ++i) {
        const std::string base = "encoder." + std::to_string(i);
        h = tape.matmul(h, fb.param_nodes.at(base + ".weight"));
        h = tape.add_row_broadcast(h, fb.param_nodes.at(base + ".bias"));
        h = tape.relu(h);
    }
    if (cfg.norm_placement == NormPlacement::kEncoderOutput) {
        h = tape.batchnorm(h, fb.param_nodes.at("norm.gamma"), fb.param_nodes.at("norm.beta"),
                           params.norm.running, mode, cfg.norm_eps, cfg.norm_momentum);
    }
    fb.encoded = h;

    for (const auto& t : head_tasks) {
        if (!params.tasks.has(t) || params.towers.find(t) == params.towers.end()) {
            throw config_error("task '" + t + "' not found in model");
        }
        const auto& tower = params.towers.at(t);
        GradTape::NodeId z = fb.encoded;
        for (std::size_t i = 0; i < tower.size(); ++i) {
            const std::string base = "tower." + t + "." + std::to_string(i);
            z = tape.matmul(z, fb.param_nodes.at(base + ".weight"));
            z = tape.add_row_broadcast(z, fb.param_nodes.at(base + ".bias"));
            if (i + 1 < tower.size()) z = tape.relu(z);
        }
        fb.logits[t] = z;
    }
    return fb;
}

Matrix encode(ModelParams& params, std::span<const FeatureVector> batch, NormMode mode) {
    Matrix x = concat_features(params.config, batch);
    GradTape tape;
    ForwardBuild fb = build_forward(tape, params, x, mode, {});
    return tape.value(fb.encoded);
}

namespace {

Matrix tower_probabilities(ModelParams& params, const Matrix& encoded, const std::string& t) {
    if (!params.tasks.has(t) || params.towers.find(t) == params.towers.end()) {
        throw config_error("task '" + t + "' not found in model");
    }
    const auto& tower = params.towers.at(t);
    Matrix z = encoded;
    for (std::size_t i = 0; i < tower.size(); ++i) {
        z = add_row_broadcast(matmul(z, tower[i].weight), tower[i].bias);
        if (i + 1 < tower.size()) z = relu(z);
    }
    return sigmoid(z);
}

}  // namespace

Matrix predict_task(ModelParams& params, const Matrix& encoded, const std::string& task) {
    if (encoded.cols() != params.config.encoder_output_dim()) {
        throw config_error("encoded width " + std::to_string(encoded.cols()) +
                           " does not match encoder output dim " +
                           std::to_string(params.config.encoder_output_dim()));
    }
    return tower_probabilities(params, encoded, task);
}

std::map<std::string, Matrix> predict_all(ModelParams& params,
                                          std::span<const FeatureVector> batch) {
    Matrix z = encode(params, batch, NormMode::kInfer);
    std::map<std::string, Matrix> out;
    for (const auto& t : params.tasks.tasks) {
        out[t] = tower_probabilities(params, z, t);
    }
    return out;
}

Matrix predict_matrix(ModelParams& params, const Matrix& features, const std::string& task) {
    GradTape tape;
    ForwardBuild fb = build_forward(tape, params, features, NormMode::kInfer, {task});
    return sigmoid(tape.value(fb.logits.at(task)));
}

// ---------------------------------------------------------------------------
// Serialization. Layout:
//   magic "PMTL", u32 version,
//   u64 header length, header JSON (config echo + task list),
//   u64 block count, then per block:
//     u32 name length, name bytes, u32 rows, u32 cols, rows*cols f64 (LE).
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'P', 'M', 'T', 'L'};
constexpr std::uint32_t kFormatVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 8);
}

void write_f64(std::ostream& os, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    write_u64(os, bits);
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw data_error("model file: truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw data_error("model file: truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

double read_f64(std::istream& is) {
    const std::uint64_t bits = read_u64(is);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

ordered_json config_to_json(const ModelConfig& c) {
    ordered_json j;
    j["user_dim"] = c.user_dim;
    j["content_dim"] = c.content_dim;
    j["context_dim"] = c.context_dim;
    j["creative_dim"] = c.creative_dim;
    j["encoder_widths"] = c.encoder_widths;
    j["tower_widths"] = c.tower_widths;
    j["norm_placement"] = norm_placement_name(c.norm_placement);
    j["norm_eps"] = c.norm_eps;
    j["norm_momentum"] = c.norm_momentum;
    return j;
}

ModelConfig config_from_json(const ordered_json& j) {
    ModelConfig c;
    c.user_dim = j.at("user_dim").get<std::size_t>();
    c.content_dim = j.at("content_dim").get<std::size_t>();
    c.context_dim = j.at("context_dim").get<std::size_t>();
    c.creative_dim = j.at("creative_dim").get<std::size_t>();
    c.encoder_widths = j.at("encoder_widths").get<std::vector<std::size_t>>();
    c.tower_widths = j.at("tower_widths").get<std::vector<std::size_t>>();
    c.norm_placement = norm_placement_from_name(j.at("norm_placement").get<std::string>());
    c.norm_eps = j.at("norm_eps").get<double>();
    c.norm_momentum = j.at("norm_momentum").get<double>();
    return c;
}

ordered_json tasks_to_json(const TaskSpec& t) {
    ordered_json j;
    j["tasks"] = t.tasks;
    j["promo_tasks"] = std::vector<std::string>(t.promo_tasks.begin(), t.promo_tasks.end());
    j["ad_tasks"] = std::vector<std::string>(t.ad_tasks.begin(), t.ad_tasks.end());
    ordered_json w;
    for (const auto& name : t.tasks) w[name] = t.weight(name);
    j["weights"] = w;
    return j;
}

TaskSpec tasks_from_json(const ordered_json& j) {
    TaskSpec t;
    t.tasks = j.at("tasks").get<std::vector<std::string>>();
    for (const auto& s : j.at("promo_tasks")) t.promo_tasks.insert(s.get<std::string>());
    for (const auto& s : j.at("ad_tasks")) t.ad_tasks.insert(s.get<std::string>());
    for (const auto& [k, v] : j.at("weights").items()) t.weights[k] = v.get<double>();
    return t;
}

}  // namespace

void save_model(const ModelParams& params, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw data_error("cannot open '" + path + "' for writing");

    os.write(kMagic, 4);
    write_u32(os, kFormatVersion);

    ordered_json header;
    header["config"] = config_to_json(params.config);
    header["tasks"] = tasks_to_json(params.tasks);
    const std::string htext = header.dump();
    write_u64(os, htext.size());
    os.write(htext.data(), static_cast<std::streamsize>(htext.size()));

    std::vector<std::pair<std::string, const Matrix*>> blocks;
    params.for_each_block(
        [&](const std::string& name, const Matrix& m) { blocks.emplace_back(name, &m); });
    if (params.config.norm_placement != NormPlacement::kNone) {
        blocks.emplace_back("norm.running_mean", &params.norm.running.mean);
        blocks.emplace_back("norm.running_var", &params.norm.running.var);
    }

    write_u64(os, blocks.size());
    for (const auto& [name, m] : blocks) {
        write_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(os, static_cast<std::uint32_t>(m->rows()));
        write_u32(os, static_cast<std::uint32_t>(m->cols()));
        for (std::size_t i = 0; i < m->size(); ++i) write_f64(os, (*m)[i]);
    }
    if (!os) throw data_error("failed writing model file '" + path + "'");
}

ModelParams load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw data_error("cannot open model file '" + path + "'");

    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) {
        throw data_error("'" + path + "' is not a model file (bad magic)");
    }
    const std::uint32_t version = read_u32(is);
    if (version != kFormatVersion) {
        throw data_error("model file version " + std::to_string(version) + " unsupported");
    }
    const std::uint64_t hlen = read_u64(is);
    std::string htext(hlen, '\0');
    is.read(htext.data(), static_cast<std::streamsize>(hlen));
    if (!is) throw data_error("model file: truncated header");

    ordered_json header;
    try {
        header = ordered_json::parse(htext);
    } catch (const std::exception& e) {
        throw data_error(std::string("model file: bad header JSON: ") + e.what());
    }

    ModelParams p = init_params(config_from_json(header.at("config")),
                                tasks_from_json(header.at("tasks")), 0);

    std::map<std::string, Matrix*> slots;
    p.for_each_block([&](const std::string& name, Matrix& m) { slots[name] = &m; });
    if (p.config.norm_placement != NormPlacement::kNone) {
        slots["norm.running_mean"] = &p.norm.running.mean;
        slots["norm.running_var"] = &p.norm.running.var;
    }

    const std::uint64_t n_blocks = read_u64(is);
    std::set<std::string> seen;
    for (std::uint64_t b = 0; b < n_blocks; ++b) {
        const std::uint32_t nlen = read_u32(is);
        std::string name(nlen, '\0');
        is.read(name.data(), nlen);
        const std::uint32_t rows = read_u32(is);
        const std::uint32_t cols = read_u32(is);
        auto it = slots.find(name);
        if (it == slots.end()) {
            throw data_error("model file: unknown parameter block '" + name + "'");
        }
        Matrix& m = *it->second;
        if (m.rows() != rows || m.cols() != cols) {
            throw data_error("model file: block '" + name + "' has shape " +
                             std::to_string(rows) + "x" + std::to_string(cols) +
                             ", expected " + m.shape_str());
        }
        for (std::size_t i = 0; i < m.size(); ++i) m[i] = read_f64(is);
        seen.insert(name);
    }
    for (const auto& [name, ptr] : slots) {
        (void)ptr;
        if (!seen.count(name)) {
            throw data_error("model file: missing parameter block '" + name + "'");
        }
    }
    return p;
}

}  // namespace podmtl
